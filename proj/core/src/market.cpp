#include "mktsim/market.hpp"

#include <cmath>
#include <string>

#include "mktsim/error.hpp"

namespace mktsim {

std::string_view to_string(Side s) noexcept { return s == Side::buy ? "buy" : "sell"; }

double spread_pnl(double qty, double spread) {
  if (!(qty >= 0.0)) throw InvalidArgument("spread_pnl: negative quantity " + std::to_string(qty));
  return qty * spread;
}

double inventory_pnl(double inventory, double delta_mid) noexcept { return inventory * delta_mid; }

double passive_spread(Side aggressor_side, double exec_price, double mid) noexcept {
  return aggressor_side == Side::buy ? exec_price - mid : mid - exec_price;
}

PnLLedger apply_trade(const PnLLedger& ledger, const Trade& trade, const ReferencePrices& ref,
                      TradeRole role) {
  PnLLedger out = ledger;
  const double earned = spread_pnl(trade.qty, passive_spread(trade.side, trade.exec_price, ref.p_mid));
  // Sign of the inventory change for this party.
  const bool buys = (role == TradeRole::aggressor) == (trade.side == Side::buy);
  const double dz = buys ? trade.qty : -trade.qty;
  out.inventory_ += dz;
  out.cash_ -= dz * trade.exec_price;
  out.pending_spread_ += role == TradeRole::passive ? earned : -earned;
  return out;
}

PnLLedger mark_to_market(const PnLLedger& ledger, double new_mid, double old_mid) {
  PnLLedger out = ledger;
  const double d_inv = inventory_pnl(ledger.open_inventory_, new_mid - old_mid);
  const double d_spread = ledger.pending_spread_;
  out.last_ = StepDeltas{d_spread + d_inv, d_inv, d_spread};
  out.spread_pnl_cum_ += d_spread;
  out.inventory_pnl_cum_ += d_inv;
  out.pending_spread_ = 0.0;
  out.open_inventory_ = out.inventory_;
  return out;
}

} // namespace mktsim
