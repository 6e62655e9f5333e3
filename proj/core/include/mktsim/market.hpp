#pragma once

#include <cstdint>
#include <string_view>

namespace mktsim {

using AgentId = std::int32_t;

/// Owner id of every synthetic order resting on the ECN book.
inline constexpr AgentId kEcnId = -1;

/// Direction of a trade from the aggressor's point of view.
enum class Side : std::uint8_t { buy, sell };

constexpr Side opposite(Side s) noexcept { return s == Side::buy ? Side::sell : Side::buy; }
std::string_view to_string(Side s) noexcept;

struct Quote {
  double bid_price = 0.0;
  double ask_price = 0.0;
  double quote_size = 0.0;  // 0 means unbounded
};

/// Mid-price of the ECN and the half-spreads on each side of it.
struct ReferencePrices {
  double p_mid = 0.0;
  double s_ref_bid = 0.0;
  double s_ref_ask = 0.0;

  double total_spread() const noexcept { return s_ref_bid + s_ref_ask; }
  double best_bid() const noexcept { return p_mid - s_ref_bid; }
  double best_ask() const noexcept { return p_mid + s_ref_ask; }
};

struct Trade {
  Side side = Side::buy;
  double qty = 0.0;
  double exec_price = 0.0;
  AgentId aggressor_id = 0;
  AgentId counterparty_id = kEcnId;
  int step = 0;
};

/// Per-step changes of the ledger, i.e. x_t - x_{t-1} of each PnL series.
struct StepDeltas {
  double total = 0.0;
  double inventory = 0.0;
  double spread = 0.0;
};

enum class TradeRole : std::uint8_t { aggressor, passive };

/// Cash and inventory accounting of one participant.
///
/// Trades and mark-to-market moves accumulate into the open step; closing
/// the step (mark_to_market) commits them to the cumulative series, so the
/// cumulative values are always exactly the running sum of the published
/// step deltas.
class PnLLedger {
public:
  PnLLedger() = default;
  explicit PnLLedger(double inventory, double cash = 0.0)
      : inventory_(inventory), open_inventory_(inventory), cash_(cash) {}

  double inventory() const noexcept { return inventory_; }
  double cash() const noexcept { return cash_; }

  double spread_pnl() const noexcept { return spread_pnl_cum_ + pending_spread_; }
  double inventory_pnl() const noexcept { return inventory_pnl_cum_; }
  double total_pnl() const noexcept { return spread_pnl() + inventory_pnl(); }

  /// Committed cumulative values (as of the last closed step).
  double spread_pnl_cum() const noexcept { return spread_pnl_cum_; }
  double inventory_pnl_cum() const noexcept { return inventory_pnl_cum_; }
  double total_pnl_cum() const noexcept { return spread_pnl_cum_ + inventory_pnl_cum_; }

  const StepDeltas& last_step_deltas() const noexcept { return last_; }

  /// Spread PnL booked in the currently open step.
  double pending_spread() const noexcept { return pending_spread_; }

  friend PnLLedger apply_trade(const PnLLedger&, const Trade&, const ReferencePrices&, TradeRole);
  friend PnLLedger mark_to_market(const PnLLedger&, double, double);

private:
  double inventory_ = 0.0;
  double open_inventory_ = 0.0;  // inventory held when the step opened
  double cash_ = 0.0;
  double spread_pnl_cum_ = 0.0;
  double inventory_pnl_cum_ = 0.0;
  double pending_spread_ = 0.0;
  StepDeltas last_{};
};

/// q * s. Throws InvalidArgument for negative quantities.
double spread_pnl(double qty, double spread);

/// z * dP.
double inventory_pnl(double inventory, double delta_mid) noexcept;

/// Spread earned by the passive side of a fill, per unit, measured against
/// the mid at execution: ask-side fills earn exec - mid, bid-side fills
/// earn mid - exec. Negative when the passive side quoted through the mid.
double passive_spread(Side aggressor_side, double exec_price, double mid) noexcept;

/// Books a fill into the ledger of one of its two parties. The passive
/// party is credited the spread and the aggressor debited the same amount.
PnLLedger apply_trade(const PnLLedger& ledger, const Trade& trade, const ReferencePrices& ref,
                      TradeRole role);

/// Marks the inventory held at the start of the step from old_mid to
/// new_mid, then closes the step and refreshes last_step_deltas.
PnLLedger mark_to_market(const PnLLedger& ledger, double new_mid, double old_mid);

} // namespace mktsim
