#include "mktsim/agents.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mktsim/error.hpp"

namespace mktsim {

std::string_view to_string(Family f) noexcept { return f == Family::lp ? "LP" : "LT"; }

std::string_view to_string(LtChoice c) noexcept {
  switch (c) {
  case LtChoice::sell: return "sell";
  case LtChoice::buy: return "buy";
  case LtChoice::hold: return "hold";
  }
  return "?";
}

namespace {
void check_unit(std::string_view name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(name) + " must lie in [0, 1]");
}
} // namespace

void AgentType::validate() const {
  check_unit("w", w);
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (!(gamma >= 0.0)) throw InvalidArgument("gamma must be non-negative");
  check_unit("connect_prob_lt", connect_prob_lt);
  check_unit("connect_prob_lp", connect_prob_lp);
  check_unit("connect_prob_ecn", connect_prob_ecn);
  if (family == Family::lp) {
    check_unit("market_share_target", market_share_target);
  } else {
    double s = 0.0;
    for (double q : flow_targets) {
      if (!(q >= 0.0)) throw InvalidArgument("flow targets must be non-negative");
      s += q;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("flow targets must sum to one");
  }
}

void check_bounds(const LPAction& a, const ActionBounds& b) {
  constexpr double slack = 1e-12;
  if (!(a.eps_sym >= b.eps_sym_min - slack && a.eps_sym <= b.eps_sym_max + slack))
    throw ActionOutOfBounds("eps_sym " + std::to_string(a.eps_sym) + " outside bounds");
  if (!(std::abs(a.eps_asym) <= b.eps_asym_max + slack))
    throw ActionOutOfBounds("eps_asym " + std::to_string(a.eps_asym) + " outside bounds");
  if (!(a.hedge_fraction >= -slack && a.hedge_fraction <= 1.0 + slack))
    throw ActionOutOfBounds("hedge fraction " + std::to_string(a.hedge_fraction) + " outside [0, 1]");
}

Quote lp_quote(const LPAction& action, const ReferencePrices& ref) {
  const double total = ref.total_spread();
  const double half = 0.5 * (1.0 + action.eps_sym);
  return Quote{ref.p_mid - total * (half - action.eps_asym), ref.p_mid + total * (half + action.eps_asym), 0.0};
}

double normalized_tweak(const LPAction& action) noexcept { return 0.5 * action.eps_sym + action.eps_asym; }

double risk_adjusted_pnl(const StepDeltas& deltas, double gamma) noexcept {
  return deltas.total - gamma * std::abs(deltas.inventory);
}

double flow_distance(const std::array<long, kLtActionCount>& counts, long t,
                     const std::array<double, kLtActionCount>& q_star) {
  double d = 0.0;
  for (int j = 0; j < kLtActionCount; ++j) {
    const double freq = t > 0 ? static_cast<double>(counts[j]) / static_cast<double>(t) : 0.0;
    d += std::abs(freq - q_star[j]);
  }
  return d / kLtActionCount;
}

double flow_penalty(const FlowTracker& tracker, const std::array<double, kLtActionCount>& q_star) {
  if (tracker.t == 0 || !tracker.last) return 0.0;
  auto before = tracker.counts;
  --before[static_cast<int>(*tracker.last)];
  return flow_distance(tracker.counts, tracker.t, q_star) - flow_distance(before, tracker.t - 1, q_star);
}

double market_share_penalty(MarketShareTracker& tracker, double m_star, double own_volume,
                            double total_volume) {
  if (own_volume < 0.0 || total_volume < own_volume)
    throw InvalidArgument("market share volumes must satisfy 0 <= own <= total");
  const double before = tracker.prev_distance.value_or(std::abs(tracker.share() - m_star));
  tracker.own_traded_cum += own_volume;
  tracker.all_traded_cum += total_volume;
  const double now = std::abs(tracker.share() - m_star);
  tracker.prev_distance = now;
  return now - before;
}

double lp_reward(const AgentType& type, const StepDeltas& deltas, double ms_penalty) noexcept {
  return type.w * type.alpha * risk_adjusted_pnl(deltas, type.gamma) - (1.0 - type.w) * ms_penalty;
}

double lt_reward(const AgentType& type, const StepDeltas& deltas, double flow_pen) noexcept {
  return type.w * type.alpha * risk_adjusted_pnl(deltas, type.gamma) - (1.0 - type.w) * flow_pen;
}

// LP layout: history | z | elapsed | share | bid vols | ask vols | hedge costs | w gamma m* p_lt p_ecn
std::size_t lp_type_offset(const ObservationConfig& cfg) {
  return static_cast<std::size_t>(cfg.history + 3 + 2 * cfg.levels) + kHedgeGrid.size();
}
std::size_t lp_observation_size(const ObservationConfig& cfg) { return lp_type_offset(cfg) + 5; }

// LT layout: history | z | elapsed | q_sell q_buy | per-LP buy/sell cost | ECN buy/sell cost |
//            w gamma q*_sell q*_buy p_lp p_ecn
std::size_t lt_type_offset(const ObservationConfig& cfg, int n_lp) {
  return static_cast<std::size_t>(cfg.history + 4 + 2 * n_lp + 2);
}
std::size_t lt_observation_size(const ObservationConfig& cfg, int n_lp) { return lt_type_offset(cfg, n_lp) + 6; }

namespace {
void push_history(std::vector<double>& out, std::span<const double> hist, double start, const ObservationConfig& cfg) {
  for (int k = 0; k < cfg.history; ++k)
    out.push_back(k < static_cast<int>(hist.size()) ? (hist[k] - start) / cfg.price_scale : 0.0);
}
} // namespace

std::vector<double> build_lp_observation(const LpView& v, const AgentType& type, const ObservationConfig& cfg) {
  std::vector<double> out;
  out.reserve(lp_observation_size(cfg));
  push_history(out, v.mid_history, v.episode_start_mid, cfg);
  out.push_back(v.inventory / cfg.inventory_scale);
  out.push_back(v.elapsed_fraction);
  out.push_back(v.market_share);
  for (int k = 0; k < cfg.levels; ++k)
    out.push_back(v.book && k < static_cast<int>(v.book->levels()) ? v.book->bid_volumes[k] / cfg.volume_scale : 0.0);
  for (int k = 0; k < cfg.levels; ++k)
    out.push_back(v.book && k < static_cast<int>(v.book->levels()) ? v.book->ask_volumes[k] / cfg.volume_scale : 0.0);
  for (double c : v.hedge_costs) out.push_back(c / (cfg.price_scale * cfg.inventory_scale));
  out.push_back(type.w);
  out.push_back(type.gamma);
  out.push_back(type.market_share_target);
  out.push_back(type.connect_prob_lt);
  out.push_back(type.connect_prob_ecn);
  return out;
}

std::vector<double> build_lt_observation(const LtView& v, const AgentType& type, const ObservationConfig& cfg) {
  std::vector<double> out;
  out.reserve(lt_observation_size(cfg, static_cast<int>(v.lp_quotes.size())));
  push_history(out, v.mid_history, v.episode_start_mid, cfg);
  out.push_back(v.inventory / cfg.inventory_scale);
  out.push_back(v.elapsed_fraction);
  out.push_back(v.sell_proportion);
  out.push_back(v.buy_proportion);
  const double sentinel = 10.0 * v.ref.total_spread() / cfg.price_scale;
  for (const auto& q : v.lp_quotes) {
    out.push_back(q ? (q->ask_price - v.ref.p_mid) / cfg.price_scale : sentinel);
    out.push_back(q ? (v.ref.p_mid - q->bid_price) / cfg.price_scale : sentinel);
  }
  out.push_back(v.ecn ? (v.ecn->ask_price - v.ref.p_mid) / cfg.price_scale : sentinel);
  out.push_back(v.ecn ? (v.ref.p_mid - v.ecn->bid_price) / cfg.price_scale : sentinel);
  out.push_back(type.w);
  out.push_back(type.gamma);
  out.push_back(type.flow_targets[static_cast<int>(LtChoice::sell)]);
  out.push_back(type.flow_targets[static_cast<int>(LtChoice::buy)]);
  out.push_back(type.connect_prob_lp);
  out.push_back(type.connect_prob_ecn);
  return out;
}

double hedge_cost(const OrderBook& book, Side side, double qty, double mid) {
  if (qty <= 0.0) return 0.0;
  const auto [executed, vwap] = book.probe_market(side, qty);
  double cost = 0.0;
  double worst = book.tick_size();
  if (vwap) {
    cost = executed * (side == Side::buy ? *vwap - mid : mid - *vwap);
    worst = std::abs(*vwap - mid) + book.tick_size();
  }
  return cost + (qty - executed) * worst;
}

double ParamDist::sample(Rng& rng) const {
  switch (kind) {
  case Kind::fixed: return value;
  case Kind::uniform: return rng.uniform(lo, hi);
  case Kind::choice: return choices[rng.below(choices.size())];
  }
  return value;
}

void ParamDist::validate(std::string_view name, double min, double max) const {
  auto in = [&](double v) { return v >= min && v <= max; };
  const std::string n(name);
  switch (kind) {
  case Kind::fixed:
    if (!in(value)) throw InvalidArgument(n + " value out of range");
    break;
  case Kind::uniform:
    if (!(lo <= hi) || !in(lo) || !in(hi)) throw InvalidArgument(n + " uniform range invalid");
    break;
  case Kind::choice:
    if (choices.empty()) throw InvalidArgument(n + " has no choices");
    for (double c : choices)
      if (!in(c)) throw InvalidArgument(n + " choice out of range");
    break;
  }
}

void TypeDistribution::validate() const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  w.validate("w", 0.0, 1.0);
  alpha.validate("alpha", 1e-300, inf);
  gamma.validate("gamma", 0.0, inf);
  market_share_target.validate("market_share_target", 0.0, 1.0);
  for (const auto& q : flow_targets) q.validate("flow_targets", 0.0, inf);
  connect_prob_lt.validate("connect_prob_lt", 0.0, 1.0);
  connect_prob_lp.validate("connect_prob_lp", 0.0, 1.0);
  connect_prob_ecn.validate("connect_prob_ecn", 0.0, 1.0);
}

AgentType sample_type(const TypeDistribution& dist, Rng& rng) {
  dist.validate();
  AgentType t;
  t.family = dist.family;
  t.w = dist.w.sample(rng);
  t.alpha = dist.alpha.sample(rng);
  t.gamma = dist.gamma.sample(rng);
  t.market_share_target = dist.market_share_target.sample(rng);
  double total = 0.0;
  for (int j = 0; j < kLtActionCount; ++j) {
    t.flow_targets[j] = dist.flow_targets[j].sample(rng);
    total += t.flow_targets[j];
  }
  t.connect_prob_lt = dist.connect_prob_lt.sample(rng);
  t.connect_prob_lp = dist.connect_prob_lp.sample(rng);
  t.connect_prob_ecn = dist.connect_prob_ecn.sample(rng);
  if (dist.family == Family::lt) {
    if (!(total > 0.0)) throw InvalidArgument("flow targets must not all be zero");
    for (double& q : t.flow_targets) q /= total;
  } else {
    t.flow_targets = {};
  }
  if (dist.family == Family::lt) t.market_share_target = 0.0;
  return t;
}

} // namespace mktsim
