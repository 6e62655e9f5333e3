#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mktsim/market.hpp"
#include "mktsim/order_book.hpp"
#include "mktsim/rng.hpp"

namespace mktsim {

enum class Family : std::uint8_t { lp, lt };
std::string_view to_string(Family f) noexcept;

/// LT action space. The order is also the index order of flow targets and
/// flow counts: (sell, buy, hold).
enum class LtChoice : std::uint8_t { sell = 0, buy = 1, hold = 2 };
inline constexpr int kLtActionCount = 3;
std::string_view to_string(LtChoice c) noexcept;

/// Reward and connectivity parameters that condition a family's shared policy.
struct AgentType {
  Family family = Family::lp;
  double w = 1.0;
  double alpha = 1.0;
  double gamma = 0.0;
  double market_share_target = 0.0;                   // LP only
  std::array<double, kLtActionCount> flow_targets{};  // LT only, on the simplex
  double connect_prob_lt = 1.0;
  double connect_prob_lp = 1.0;
  double connect_prob_ecn = 1.0;

  /// Throws InvalidArgument when a parameter is out of range.
  void validate() const;
  bool operator==(const AgentType&) const = default;
};

struct LPAction {
  double eps_sym = 0.0;
  double eps_asym = 0.0;
  double hedge_fraction = 0.0;
};

struct ActionBounds {
  double eps_sym_min = -1.0;
  double eps_sym_max = 1.0;
  double eps_asym_max = 1.0;

  bool operator==(const ActionBounds&) const = default;
};

/// Throws ActionOutOfBounds.
void check_bounds(const LPAction& a, const ActionBounds& bounds = {});

struct LTAction {
  LtChoice choice = LtChoice::hold;
  /// Venue the env routed the order to: an LP id or kEcnId. Empty for hold
  /// and for orders that found no connected venue.
  std::optional<AgentId> counterparty;
};

struct FlowTracker {
  std::array<long, kLtActionCount> counts{};
  long t = 0;
  std::optional<LtChoice> last;

  void record(LtChoice c) {
    ++counts[static_cast<int>(c)];
    ++t;
    last = c;
  }
  double frequency(LtChoice c) const {
    return t == 0 ? 0.0 : static_cast<double>(counts[static_cast<int>(c)]) / static_cast<double>(t);
  }
};

struct MarketShareTracker {
  double own_traded_cum = 0.0;
  double all_traded_cum = 0.0;
  std::optional<double> prev_distance;

  double share() const noexcept { return all_traded_cum > 0.0 ? own_traded_cum / all_traded_cum : 0.0; }
};

/// Quote from the symmetric/asymmetric tweaks around the reference prices.
Quote lp_quote(const LPAction& action, const ReferencePrices& ref);

/// 1/2 eps_sym + eps_asym.
double normalized_tweak(const LPAction& action) noexcept;

/// dPnL - gamma |dPnL_inventory|.
double risk_adjusted_pnl(const StepDeltas& deltas, double gamma) noexcept;

/// Mean L1 distance between empirical action frequencies and the targets.
/// With no actions yet the frequencies count as zero.
double flow_distance(const std::array<long, kLtActionCount>& counts, long t,
                     const std::array<double, kLtActionCount>& q_star);

/// Change of flow_distance caused by the tracker's latest action. 0 at t=0.
double flow_penalty(const FlowTracker& tracker, const std::array<double, kLtActionCount>& q_star);

/// Adds this step's traded volumes to the tracker and returns the change of
/// |share - m*|. Before the first call the share counts as zero.
double market_share_penalty(MarketShareTracker& tracker, double m_star, double own_volume,
                            double total_volume);

double lp_reward(const AgentType& type, const StepDeltas& deltas, double ms_penalty) noexcept;
double lt_reward(const AgentType& type, const StepDeltas& deltas, double flow_penalty) noexcept;

/// Scaling and layout of observation vectors.
struct ObservationConfig {
  int history = 10;
  int levels = 5;
  double price_scale = 0.05;
  double inventory_scale = 10.0;
  double volume_scale = 10.0;

  bool operator==(const ObservationConfig&) const = default;
};

inline constexpr std::array<double, 4> kHedgeGrid{0.25, 0.5, 0.75, 1.0};

/// What an LP can see of the world at a decision point.
struct LpView {
  std::span<const double> mid_history;  // most recent first, excluding padding
  double episode_start_mid = 0.0;
  double inventory = 0.0;
  double elapsed_fraction = 0.0;
  double market_share = 0.0;
  const BookSnapshot* book = nullptr;
  std::array<double, kHedgeGrid.size()> hedge_costs{};
};

struct LtView {
  std::span<const double> mid_history;
  double episode_start_mid = 0.0;
  double inventory = 0.0;
  double elapsed_fraction = 0.0;
  double sell_proportion = 0.0;
  double buy_proportion = 0.0;
  ReferencePrices ref;
  /// One quote per LP slot; empty optional when not connected.
  std::span<const std::optional<Quote>> lp_quotes;
  std::optional<Quote> ecn;  // ECN touch, empty when not connected
};

std::size_t lp_observation_size(const ObservationConfig& cfg);
std::size_t lt_observation_size(const ObservationConfig& cfg, int n_lp);

std::vector<double> build_lp_observation(const LpView& view, const AgentType& type, const ObservationConfig& cfg);
std::vector<double> build_lt_observation(const LtView& view, const AgentType& type, const ObservationConfig& cfg);

/// Index of the first type slot in each observation layout.
std::size_t lp_type_offset(const ObservationConfig& cfg);
std::size_t lt_type_offset(const ObservationConfig& cfg, int n_lp);

/// Total cost (in price units) of market-ordering qty into the book against
/// the mid; 0 for qty == 0. Unfillable remainder is charged at the VWAP
/// distance plus one tick.
double hedge_cost(const OrderBook& book, Side side, double qty, double mid);

/// Distribution of one type parameter: fixed, uniform on [lo, hi] or a
/// uniform choice among values.
struct ParamDist {
  enum class Kind : std::uint8_t { fixed, uniform, choice };
  Kind kind = Kind::fixed;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> choices;

  static ParamDist fixed(double v) { return ParamDist{Kind::fixed, v, v, v, {}}; }
  static ParamDist uniform(double lo, double hi) { return ParamDist{Kind::uniform, lo, lo, hi, {}}; }
  static ParamDist choice(std::vector<double> values) {
    return ParamDist{Kind::choice, values.empty() ? 0.0 : values.front(), 0.0, 0.0, std::move(values)};
  }

  double sample(Rng& rng) const;
  void validate(std::string_view name, double min, double max) const;
  bool operator==(const ParamDist&) const = default;
};

struct TypeDistribution {
  Family family = Family::lp;
  ParamDist w = ParamDist::fixed(1.0);
  ParamDist alpha = ParamDist::fixed(1.0);
  ParamDist gamma = ParamDist::fixed(0.0);
  ParamDist market_share_target = ParamDist::fixed(0.0);
  std::array<ParamDist, kLtActionCount> flow_targets{ParamDist::fixed(0.5), ParamDist::fixed(0.5),
                                                     ParamDist::fixed(0.0)};
  ParamDist connect_prob_lt = ParamDist::fixed(1.0);
  ParamDist connect_prob_lp = ParamDist::fixed(1.0);
  ParamDist connect_prob_ecn = ParamDist::fixed(1.0);

  void validate() const;
  bool operator==(const TypeDistribution&) const = default;
};

/// Draws every parameter in a fixed order; flow targets are renormalized
/// onto the simplex.
AgentType sample_type(const TypeDistribution& dist, Rng& rng);

} // namespace mktsim
