#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mktsim/agents.hpp"
#include "mktsim/ecn_model.hpp"
#include "mktsim/market.hpp"
#include "mktsim/order_book.hpp"
#include "mktsim/rng.hpp"

namespace mktsim {

/// Deterministic additive mid-price path A sin(2 pi t / period + phase).
struct TrendConfig {
  double amplitude = 0.0;
  double period = 0.0;  // in steps; 0 means one cycle per episode
  double phase = 0.0;
  double drift = 0.0;   // added to the mid per step

  bool operator==(const TrendConfig&) const = default;
};

/// LTs come in two groups sharing one policy: flow-driven and PnL-driven.
enum class LtGroup : std::uint8_t { flow, pnl };
std::string_view to_string(LtGroup g) noexcept;

struct EnvConfig {
  int n_lp = 3;
  int n_lt_flow = 12;
  int n_lt_pnl = 0;
  int episode_len = 256;
  TypeDistribution lp_types{};
  TypeDistribution lt_flow_types{Family::lt};
  TypeDistribution lt_pnl_types{Family::lt};
  ObservationConfig obs;
  ActionBounds bounds;
  TrendConfig trend;
  bool evolve_ecn = true;
  /// Book evolutions per agent step when the ECN evolves.
  int ecn_substeps = 1;
  /// Null means the default calibrated model.
  std::shared_ptr<const EcnDynamics> ecn;

  int n_lt() const noexcept { return n_lt_flow + n_lt_pnl; }
  int n_agents() const noexcept { return n_lp + n_lt(); }
  /// Throws InvalidArgument.
  void validate() const;
  bool operator==(const EnvConfig&) const = default;
};

/// Which agents can trade with which venues for one episode.
struct ConnectivityGraph {
  int n_lp = 0;
  int n_lt = 0;
  std::vector<std::uint8_t> lt_lp;  // row-major n_lt x n_lp
  std::vector<std::uint8_t> lt_ecn;

  bool lt_to_lp(int lt, int lp) const { return lt_lp[static_cast<std::size_t>(lt * n_lp + lp)] != 0; }
  bool lt_to_ecn(int lt) const { return lt_ecn[static_cast<std::size_t>(lt)] != 0; }
  /// LPs can always reach the ECN to hedge.
  bool lp_to_ecn(int) const noexcept { return true; }
};

/// Edge (LT i, LP j) is drawn with probability connect_prob_lp(i), times
/// connect_prob_lt(j) when i is flow-driven; edge (LT i, ECN) with
/// connect_prob_ecn(i).
ConnectivityGraph sample_connectivity(const std::vector<AgentType>& lps, const std::vector<AgentType>& lts,
                                      const std::vector<LtGroup>& groups, Rng& rng);

double trend_value(const TrendConfig& cfg, int episode_len, long t) noexcept;

struct LpStepRecord {
  LPAction action;
  Quote quote;
  double lt_volume = 0.0;     // client volume this step, hedges excluded
  double hedge_qty = 0.0;     // executed hedge quantity
  StepDeltas deltas;
  double inventory = 0.0;     // after the step
  double market_share = 0.0;  // cumulative, after the step
  double reward = 0.0;
};

struct LtStepRecord {
  LtChoice choice = LtChoice::hold;
  std::optional<AgentId> counterparty;
  double exec_price = 0.0;  // 0 when nothing executed
  StepDeltas deltas;
  double inventory = 0.0;
  double reward = 0.0;
};

struct StepRecord {
  long t = 0;
  ReferencePrices ref;
  double trend = 0.0;
  std::vector<LpStepRecord> lps;
  std::vector<LtStepRecord> lts;
};

struct AgentState {
  AgentType type;
  PnLLedger ledger;
};

/// The dealer-market game. LP ids are 0..n_lp-1, LT ids follow (flow-driven
/// first). A step is split in two calls so the LTs observe the quotes the
/// LPs just published: quote() then trade().
class Env {
public:
  explicit Env(EnvConfig cfg);

  const EnvConfig& config() const noexcept { return cfg_; }

  /// Starts an episode: samples types, connectivity and the initial book.
  void reset(std::uint64_t seed);

  /// Sub-steps (1)-(2): ECN evolution, new reference prices, LP quotes.
  void quote(const std::vector<LPAction>& lp_actions);

  /// Sub-steps (3)-(7): LT routing, LP hedges, marking, rewards.
  /// Returns true when the episode is over.
  bool trade(const std::vector<LtChoice>& lt_choices);

  bool step(const std::vector<LPAction>& lp_actions, const std::vector<LtChoice>& lt_choices) {
    quote(lp_actions);
    return trade(lt_choices);
  }

  /// Observations as columns, one per agent of the family.
  Eigen::MatrixXd lp_observations() const;
  Eigen::MatrixXd lt_observations() const;  // valid between quote() and trade()
  std::size_t lp_obs_size() const;
  std::size_t lt_obs_size() const;

  long t() const noexcept { return t_; }
  bool done() const noexcept { return t_ >= cfg_.episode_len; }

  const std::vector<AgentState>& lps() const noexcept { return lps_; }
  const std::vector<AgentState>& lts() const noexcept { return lts_; }
  const std::vector<LtGroup>& lt_groups() const noexcept { return groups_; }
  const PnLLedger& ecn_ledger() const noexcept { return ecn_ledger_; }
  const ConnectivityGraph& graph() const noexcept { return graph_; }
  const OrderBook& book() const noexcept { return book_; }
  const ReferencePrices& ref() const noexcept { return ref_; }
  const std::vector<FlowTracker>& flow_trackers() const noexcept { return flow_; }
  const std::vector<MarketShareTracker>& share_trackers() const noexcept { return share_; }

  /// Client volume per LP traded in the last completed step (hedges excluded).
  const std::vector<double>& market_share_volumes() const noexcept { return lp_volume_; }
  const StepRecord& last_record() const noexcept { return record_; }

  std::vector<double> lp_rewards() const;
  std::vector<double> lt_rewards() const;

private:
  void ensure_two_sided();
  std::optional<Quote> ecn_touch() const;
  void book_trade(const Trade& trade, PnLLedger& aggressor, PnLLedger& passive);
  void execute_on_ecn(AgentId taker, Side side, double qty, PnLLedger& ledger, double& executed,
                      double& notional);

  EnvConfig cfg_;
  std::shared_ptr<const EcnDynamics> dyn_;
  Rng ecn_rng_;
  OrderBook book_;
  long t_ = 0;
  bool quoted_ = false;
  double start_mid_ = 0.0;
  double trend_ = 0.0;
  ReferencePrices ref_;
  std::vector<double> mid_history_;  // most recent first
  std::vector<AgentState> lps_;
  std::vector<AgentState> lts_;
  std::vector<LtGroup> groups_;
  PnLLedger ecn_ledger_;
  ConnectivityGraph graph_;
  std::vector<FlowTracker> flow_;
  std::vector<MarketShareTracker> share_;
  std::vector<std::optional<Quote>> quotes_;
  std::vector<double> lp_volume_;
  StepRecord record_;
};

} // namespace mktsim
