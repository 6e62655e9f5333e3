#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mktsim/agents.hpp"
#include "mktsim/env.hpp"
#include "mktsim/rl/ppo.hpp"
#include "mktsim/rl/trainer.hpp"

namespace mktsim {

/// One point of a sweep. Policies are trained on train_env and evaluated,
/// frozen, on eval_env; points with equal train_env share one training run
/// per seed.
struct SweepPoint {
  std::string key;
  EnvConfig train_env;
  EnvConfig eval_env;
};

struct ExperimentSpec {
  std::string name;
  std::vector<SweepPoint> sweep;
  long iterations = 100;
  int eval_episodes = 10;
  std::vector<std::uint64_t> seeds{1};
  std::filesystem::path out_dir;
  rl::TrainerConfig lp_trainer;
  rl::TrainerConfig lt_trainer;
  std::optional<LPAction> scripted_lp;
  /// Evaluation acts with the LP distribution's mode (exploration noise
  /// would otherwise dominate the tweak statistics); LTs sample.
  bool deterministic_lp_eval = true;
  bool deterministic_lt_eval = false;
  int jobs = 1;
  int tweak_bins = 30;
  double flow_bucket_width = 0.1;

  /// Throws InvalidArgument.
  void validate() const;
};

enum class RowGroup : std::uint8_t { lp, flow, pnl };
std::string_view to_string(RowGroup g) noexcept;

/// One agent at one evaluation step.
struct MetricRow {
  int point = 0;  // index into MetricTable::sweep_keys
  std::uint64_t seed = 0;
  int episode = 0;
  int step = 0;
  AgentId agent = 0;
  RowGroup group = RowGroup::lp;
  AgentType type;
  // LP action; unset on LT rows
  double eps_sym = 0.0;
  double eps_asym = 0.0;
  double eps = 0.0;
  double hedge = 0.0;
  std::optional<LtChoice> choice;  // LT rows only
  double reward = 0.0;
  double d_spread_pnl = 0.0;
  double d_inventory_pnl = 0.0;
  double inventory = 0.0;
  std::optional<AgentId> counterparty;  // LT rows: venue traded with (kEcnId for the ECN)
  double volume = 0.0;                  // LP: client volume; LT: executed quantity

  Family family() const noexcept { return group == RowGroup::lp ? Family::lp : Family::lt; }
  bool operator==(const MetricRow&) const = default;
};

struct MetricTable {
  std::string experiment;
  std::vector<std::string> sweep_keys;
  std::vector<MetricRow> rows;

  bool operator==(const MetricTable&) const = default;
};

/// Column names of rows.csv in order.
const std::vector<std::string>& metric_columns();
std::string rows_csv(const MetricTable& table);
void export_csv(const MetricTable& table, const std::filesystem::path& path);
/// Throws SchemaError on malformed input.
MetricTable parse_rows_csv(const std::string& text);
MetricTable read_rows_csv(const std::filesystem::path& path);

/// Appends the rows of the env's last completed step.
void append_step_rows(MetricTable& table, int point, std::uint64_t seed, int episode, const Env& env);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<long> counts;

  long total() const;
  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

struct TweakDistribution {
  Histogram eps;
  Histogram eps_sym;
  Histogram eps_asym;
};

/// Histograms of the LP tweaks per sweep key; values at or beyond the range
/// edges fall into the edge bins. Throws InvalidArgument on empty input.
std::map<std::string, TweakDistribution> tweak_distribution(const MetricTable& table, int bins);

struct FlowBucket {
  double lo = 0.0;
  double hi = 0.0;
  long lp_steps = 0;          // LP decisions whose eps fell in the bucket
  double flow_volume = 0.0;   // LT volume executed with those LPs, by flow LTs
  double pnl_volume = 0.0;    // and by PnL LTs
  double flow_mean() const { return lp_steps ? flow_volume / static_cast<double>(lp_steps) : 0.0; }
  double pnl_mean() const { return lp_steps ? pnl_volume / static_cast<double>(lp_steps) : 0.0; }
};

/// LT -> LP volume bucketed by the eps the LP quoted at that step, bid and
/// ask combined, per sweep key.
std::map<std::string, std::vector<FlowBucket>> flow_by_tweak(const MetricTable& table, double bucket_width);

struct PnlSample {
  std::uint64_t seed = 0;
  int episode = 0;
  AgentId agent = 0;
  double spread = 0.0;
  double inventory = 0.0;
  double total() const { return spread + inventory; }
};

/// Episode spread and inventory PnL of every agent, per sweep key and group.
std::map<std::string, std::map<RowGroup, std::vector<PnlSample>>> pnl_decomposition(const MetricTable& table);

struct SkewIntensity {
  double mean_abs_asym = 0.0;
  /// Same over LP decisions taken while holding inventory; NaN if none.
  double mean_abs_asym_with_inventory = 0.0;
  long samples = 0;
};

/// Mean |eps_asym| over LP evaluation rows, per sweep key. Throws
/// InvalidArgument on empty input.
std::map<std::string, SkewIntensity> skew_intensity(const MetricTable& table);

/// Per-key (and per key and seed) aggregates written to summary.json.
nlohmann::json summarize(const MetricTable& table, int tweak_bins, double bucket_width);

/// Restricts a table to one seed.
MetricTable filter_seed(const MetricTable& table, std::uint64_t seed);

struct ExperimentResult {
  MetricTable table;
  nlohmann::json summary;
  /// Training curve per (training group, seed), keyed "<key>/seed<seed>".
  std::map<std::string, std::vector<rl::CurveRow>> curves;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains per unique training env and seed, evaluates every sweep point
/// with frozen policies and, when spec.out_dir is set, writes rows.csv,
/// summary.json, curves/ and checkpoints/.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ProgressFn& progress = {});

/// Evaluates frozen policies on one env, appending rows under point index.
void evaluate_policies(MetricTable& table, int point, const EnvConfig& env, const rl::Policy& lp, const rl::Policy& lt,
                       std::uint64_t seed, int episodes, const rl::EpisodeOptions& mode, int jobs);

/// Names of the built-in presets.
const std::vector<std::string>& preset_names();

/// Built-in experiment by name; throws ConfigError listing the presets for
/// an unknown name.
ExperimentSpec make_preset(const std::string& name);

} // namespace mktsim
