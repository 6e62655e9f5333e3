#include "mktsim/env.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mktsim/error.hpp"

namespace mktsim {

std::string_view to_string(LtGroup g) noexcept { return g == LtGroup::flow ? "flow" : "pnl"; }

void EnvConfig::validate() const {
  if (n_lp < 0 || n_lt_flow < 0 || n_lt_pnl < 0) throw InvalidArgument("agent counts must be non-negative");
  if (n_agents() == 0) throw InvalidArgument("environment has no agents");
  if (episode_len < 1) throw InvalidArgument("episode_len must be at least 1");
  if (lp_types.family != Family::lp) throw InvalidArgument("lp_types must describe the LP family");
  if (lt_flow_types.family != Family::lt || lt_pnl_types.family != Family::lt)
    throw InvalidArgument("LT type distributions must describe the LT family");
  lp_types.validate();
  lt_flow_types.validate();
  lt_pnl_types.validate();
  if (ecn_substeps < 1) throw InvalidArgument("ecn_substeps must be at least 1");
  if (obs.history < 1 || obs.levels < 1) throw InvalidArgument("observation history and levels must be >= 1");
  if (!(obs.price_scale > 0.0 && obs.inventory_scale > 0.0 && obs.volume_scale > 0.0))
    throw InvalidArgument("observation scales must be positive");
  if (!(trend.period >= 0.0) || !std::isfinite(trend.amplitude) || !std::isfinite(trend.drift))
    throw InvalidArgument("invalid trend");
  if (ecn && ecn->model().levels < obs.levels)
    throw InvalidArgument("ECN model has fewer levels than the observation");
}

ConnectivityGraph sample_connectivity(const std::vector<AgentType>& lps, const std::vector<AgentType>& lts,
                                      const std::vector<LtGroup>& groups, Rng& rng) {
  ConnectivityGraph g;
  g.n_lp = static_cast<int>(lps.size());
  g.n_lt = static_cast<int>(lts.size());
  g.lt_lp.resize(lps.size() * lts.size());
  g.lt_ecn.resize(lts.size());
  for (int i = 0; i < g.n_lt; ++i) {
    for (int j = 0; j < g.n_lp; ++j) {
      double p = lts[i].connect_prob_lp;
      if (groups[i] == LtGroup::flow) p *= lps[j].connect_prob_lt;
      g.lt_lp[static_cast<std::size_t>(i * g.n_lp + j)] = rng.bernoulli(p) ? 1 : 0;
    }
    g.lt_ecn[i] = rng.bernoulli(lts[i].connect_prob_ecn) ? 1 : 0;
  }
  return g;
}

double trend_value(const TrendConfig& cfg, int episode_len, long t) noexcept {
  const double linear = cfg.drift * static_cast<double>(t);
  if (cfg.amplitude == 0.0) return linear;
  const double period = cfg.period > 0.0 ? cfg.period : static_cast<double>(episode_len);
  return linear + cfg.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period + cfg.phase);
}

Env::Env(EnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  dyn_ = cfg_.ecn ? cfg_.ecn : default_dynamics();
  if (dyn_->model().levels < cfg_.obs.levels)
    throw InvalidArgument("ECN model has fewer levels than the observation");
  book_ = OrderBook(dyn_->model().tick_size);
}

std::size_t Env::lp_obs_size() const { return lp_observation_size(cfg_.obs); }
std::size_t Env::lt_obs_size() const { return lt_observation_size(cfg_.obs, cfg_.n_lp); }

void Env::reset(std::uint64_t seed) {
  Rng master(seed);
  Rng type_rng = master.split(1);
  Rng graph_rng = master.split(2);
  Rng book_rng = master.split(3);
  ecn_rng_ = master.split(4);

  lps_.assign(static_cast<std::size_t>(cfg_.n_lp), {});
  lts_.assign(static_cast<std::size_t>(cfg_.n_lt()), {});
  groups_.assign(static_cast<std::size_t>(cfg_.n_lt()), LtGroup::flow);
  for (auto& a : lps_) a = {sample_type(cfg_.lp_types, type_rng), PnLLedger{}};
  for (int i = 0; i < cfg_.n_lt(); ++i) {
    const bool flow = i < cfg_.n_lt_flow;
    groups_[i] = flow ? LtGroup::flow : LtGroup::pnl;
    lts_[i] = {sample_type(flow ? cfg_.lt_flow_types : cfg_.lt_pnl_types, type_rng), PnLLedger{}};
  }
  std::vector<AgentType> lp_types, lt_types;
  for (const auto& a : lps_) lp_types.push_back(a.type);
  for (const auto& a : lts_) lt_types.push_back(a.type);
  graph_ = sample_connectivity(lp_types, lt_types, groups_, graph_rng);

  book_ = sample_initial_book(*dyn_, book_rng);
  ecn_ledger_ = PnLLedger{};
  flow_.assign(lts_.size(), {});
  share_.assign(lps_.size(), {});
  quotes_.assign(lps_.size(), std::nullopt);
  lp_volume_.assign(lps_.size(), 0.0);
  t_ = 0;
  quoted_ = false;
  trend_ = trend_value(cfg_.trend, cfg_.episode_len, 0);
  ref_ = book_.mid_and_spreads();
  ref_.p_mid += trend_;
  start_mid_ = ref_.p_mid;
  mid_history_.assign(1, ref_.p_mid);
  record_ = StepRecord{};
}

void Env::ensure_two_sided() {
  if (book_.has_bids() && book_.has_asks()) return;
  double fallback = start_mid_ - trend_;
  if (book_.has_bids()) fallback = book_.best_bid();
  else if (book_.has_asks()) fallback = book_.best_ask();
  replenish(book_, *dyn_, ecn_rng_, fallback);
}

void Env::quote(const std::vector<LPAction>& lp_actions) {
  if (done()) throw InvalidArgument("episode is over; call reset()");
  if (quoted_) throw InvalidArgument("quote() called twice without trade()");
  if (lp_actions.size() != lps_.size())
    throw ShapeMismatch("expected " + std::to_string(lps_.size()) + " LP actions, got " +
                        std::to_string(lp_actions.size()));
  for (const auto& a : lp_actions) check_bounds(a, cfg_.bounds);

  ensure_two_sided();
  if (cfg_.evolve_ecn && t_ % dyn_->model().dt == 0) {
    for (int k = 0; k < cfg_.ecn_substeps; ++k) {
      evolve_book(book_, *dyn_, ecn_rng_);
      ensure_two_sided();
    }
  }
  trend_ = trend_value(cfg_.trend, cfg_.episode_len, t_ + 1);
  ref_ = book_.mid_and_spreads();
  ref_.p_mid += trend_;

  record_ = StepRecord{};
  record_.t = t_;
  record_.ref = ref_;
  record_.trend = trend_;
  record_.lps.resize(lps_.size());
  record_.lts.resize(lts_.size());
  for (std::size_t j = 0; j < lps_.size(); ++j) {
    quotes_[j] = lp_quote(lp_actions[j], ref_);
    record_.lps[j].action = lp_actions[j];
    record_.lps[j].quote = *quotes_[j];
  }
  quoted_ = true;
}

void Env::book_trade(const Trade& trade, PnLLedger& aggressor, PnLLedger& passive) {
  aggressor = apply_trade(aggressor, trade, ref_, TradeRole::aggressor);
  passive = apply_trade(passive, trade, ref_, TradeRole::passive);
}

std::optional<Quote> Env::ecn_touch() const {
  if (!book_.has_bids() || !book_.has_asks()) return std::nullopt;
  return Quote{book_.best_bid() + trend_, book_.best_ask() + trend_, 0.0};
}

void Env::execute_on_ecn(AgentId taker, Side side, double qty, PnLLedger& ledger, double& executed,
                         double& notional) {
  executed = 0.0;
  notional = 0.0;
  if (qty <= 0.0) return;
  const MarketResult res = book_.submit_market(side, qty, taker);
  for (const Fill& f : res.fills) {
    const Trade tr{side, f.qty, f.price + trend_, taker, kEcnId, static_cast<int>(t_)};
    book_trade(tr, ledger, ecn_ledger_);
    executed += f.qty;
    notional += f.qty * tr.exec_price;
  }
}

bool Env::trade(const std::vector<LtChoice>& lt_choices) {
  if (!quoted_) throw InvalidArgument("trade() called before quote()");
  if (lt_choices.size() != lts_.size())
    throw ShapeMismatch("expected " + std::to_string(lts_.size()) + " LT actions, got " +
                        std::to_string(lt_choices.size()));

  // (3) LT routing, in agent id order.
  std::fill(lp_volume_.begin(), lp_volume_.end(), 0.0);
  for (std::size_t i = 0; i < lts_.size(); ++i) {
    const LtChoice c = lt_choices[i];
    flow_[i].record(c);
    LtStepRecord& rec = record_.lts[i];
    rec.choice = c;
    if (c == LtChoice::hold) continue;
    const Side side = c == LtChoice::buy ? Side::buy : Side::sell;
    const AgentId lt_id = static_cast<AgentId>(cfg_.n_lp + static_cast<int>(i));
    std::optional<int> best_lp;
    double best_price = 0.0;
    for (int j = 0; j < cfg_.n_lp; ++j) {
      if (!graph_.lt_to_lp(static_cast<int>(i), j)) continue;
      const double p = side == Side::buy ? quotes_[j]->ask_price : quotes_[j]->bid_price;
      if (!best_lp || (side == Side::buy ? p < best_price : p > best_price)) {
        best_lp = j;
        best_price = p;
      }
    }
    bool use_ecn = false;
    if (graph_.lt_to_ecn(static_cast<int>(i))) {
      if (const auto touch = ecn_touch()) {
        const double p = side == Side::buy ? touch->ask_price : touch->bid_price;
        use_ecn = !best_lp || (side == Side::buy ? p < best_price : p > best_price);
      }
    }
    if (use_ecn) {
      double executed = 0.0, notional = 0.0;
      execute_on_ecn(lt_id, side, 1.0, lts_[i].ledger, executed, notional);
      if (executed > 0.0) {
        rec.counterparty = kEcnId;
        rec.exec_price = notional / executed;
      }
    } else if (best_lp) {
      const Trade tr{side, 1.0, best_price, lt_id, static_cast<AgentId>(*best_lp), static_cast<int>(t_)};
      book_trade(tr, lts_[i].ledger, lps_[static_cast<std::size_t>(*best_lp)].ledger);
      lp_volume_[static_cast<std::size_t>(*best_lp)] += 1.0;
      rec.counterparty = static_cast<AgentId>(*best_lp);
      rec.exec_price = best_price;
    }
  }

  // (4) LP hedges against the ECN.
  for (std::size_t j = 0; j < lps_.size(); ++j) {
    const double z = lps_[j].ledger.inventory();
    const double qty = std::trunc(record_.lps[j].action.hedge_fraction * std::abs(z));
    double executed = 0.0, notional = 0.0;
    if (qty > 0.0)
      execute_on_ecn(static_cast<AgentId>(j), z > 0.0 ? Side::sell : Side::buy, qty, lps_[j].ledger, executed,
                     notional);
    record_.lps[j].hedge_qty = executed;
  }

  // (5) marking on this step's reference mid.
  const double old_mid = mid_history_.front();
  for (auto& a : lps_) a.ledger = mark_to_market(a.ledger, ref_.p_mid, old_mid);
  for (auto& a : lts_) a.ledger = mark_to_market(a.ledger, ref_.p_mid, old_mid);
  ecn_ledger_ = mark_to_market(ecn_ledger_, ref_.p_mid, old_mid);

  // (6) rewards.
  double total_client = 0.0;
  for (double v : lp_volume_) total_client += v;
  for (std::size_t j = 0; j < lps_.size(); ++j) {
    const AgentType& type = lps_[j].type;
    const double pen = market_share_penalty(share_[j], type.market_share_target, lp_volume_[j], total_client);
    LpStepRecord& rec = record_.lps[j];
    rec.lt_volume = lp_volume_[j];
    rec.deltas = lps_[j].ledger.last_step_deltas();
    rec.inventory = lps_[j].ledger.inventory();
    rec.market_share = share_[j].share();
    rec.reward = lp_reward(type, rec.deltas, pen);
  }
  for (std::size_t i = 0; i < lts_.size(); ++i) {
    const AgentType& type = lts_[i].type;
    LtStepRecord& rec = record_.lts[i];
    rec.deltas = lts_[i].ledger.last_step_deltas();
    rec.inventory = lts_[i].ledger.inventory();
    rec.reward = lt_reward(type, rec.deltas, flow_penalty(flow_[i], type.flow_targets));
  }

  // (7) advance.
  mid_history_.insert(mid_history_.begin(), ref_.p_mid);
  if (mid_history_.size() > static_cast<std::size_t>(cfg_.obs.history)) mid_history_.pop_back();
  ++t_;
  quoted_ = false;
  return done();
}

std::vector<double> Env::lp_rewards() const {
  std::vector<double> r;
  for (const auto& rec : record_.lps) r.push_back(rec.reward);
  return r;
}

std::vector<double> Env::lt_rewards() const {
  std::vector<double> r;
  for (const auto& rec : record_.lts) r.push_back(rec.reward);
  return r;
}

Eigen::MatrixXd Env::lp_observations() const {
  const auto dim = static_cast<Eigen::Index>(lp_obs_size());
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(lps_.size()));
  if (lps_.empty()) return out;
  const BookSnapshot snap = book_.has_bids() && book_.has_asks() ? book_.snapshot(cfg_.obs.levels) : BookSnapshot{};
  const double book_mid = snap.levels() ? snap.mid : ref_.p_mid - trend_;
  for (std::size_t j = 0; j < lps_.size(); ++j) {
    LpView v;
    v.mid_history = mid_history_;
    v.episode_start_mid = start_mid_;
    v.inventory = lps_[j].ledger.inventory();
    v.elapsed_fraction = static_cast<double>(t_) / cfg_.episode_len;
    v.market_share = share_[j].share();
    v.book = snap.levels() ? &snap : nullptr;
    const Side hedge_side = v.inventory > 0.0 ? Side::sell : Side::buy;
    for (std::size_t k = 0; k < kHedgeGrid.size(); ++k)
      v.hedge_costs[k] = hedge_cost(book_, hedge_side, std::trunc(kHedgeGrid[k] * std::abs(v.inventory)), book_mid);
    const auto obs = build_lp_observation(v, lps_[j].type, cfg_.obs);
    out.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(obs.data(), dim);
  }
  return out;
}

Eigen::MatrixXd Env::lt_observations() const {
  if (!quoted_) throw InvalidArgument("LT observations are only defined after quote()");
  const auto dim = static_cast<Eigen::Index>(lt_obs_size());
  Eigen::MatrixXd out(dim, static_cast<Eigen::Index>(lts_.size()));
  const auto touch = ecn_touch();
  // LTs move after the quotes, so they already see this step's mid.
  std::vector<double> history{ref_.p_mid};
  history.insert(history.end(), mid_history_.begin(), mid_history_.end());
  if (history.size() > static_cast<std::size_t>(cfg_.obs.history)) history.pop_back();
  std::vector<std::optional<Quote>> visible(lps_.size());
  for (std::size_t i = 0; i < lts_.size(); ++i) {
    for (std::size_t j = 0; j < lps_.size(); ++j)
      visible[j] = graph_.lt_to_lp(static_cast<int>(i), static_cast<int>(j)) ? quotes_[j] : std::nullopt;
    LtView v;
    v.mid_history = history;
    v.episode_start_mid = start_mid_;
    v.inventory = lts_[i].ledger.inventory();
    v.elapsed_fraction = static_cast<double>(t_) / cfg_.episode_len;
    v.sell_proportion = flow_[i].frequency(LtChoice::sell);
    v.buy_proportion = flow_[i].frequency(LtChoice::buy);
    v.ref = ref_;
    v.lp_quotes = visible;
    v.ecn = graph_.lt_to_ecn(static_cast<int>(i)) ? touch : std::nullopt;
    const auto obs = build_lt_observation(v, lts_[i].type, cfg_.obs);
    out.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(obs.data(), dim);
  }
  return out;
}

} // namespace mktsim
