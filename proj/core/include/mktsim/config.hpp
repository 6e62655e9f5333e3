#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mktsim/ecn_model.hpp"
#include "mktsim/env.hpp"
#include "mktsim/experiments.hpp"
#include "mktsim/rl/ppo.hpp"

namespace mktsim {

enum class LogLevel : std::uint8_t { error, warn, info, debug };

struct PathsConfig {
  std::filesystem::path out = "out";
  /// ECN model JSON; empty means the built-in calibration.
  std::filesystem::path model;
  /// Snapshot CSV for calibrate; empty means synthetic data.
  std::filesystem::path data;
  /// Directory holding lp.json / lt.json (evaluate, or resume for train).
  std::filesystem::path checkpoints;
};

struct CalibrateConfig {
  SynthConfig synth;
  CalibrationOptions options;
};

struct TrainConfig {
  long iterations = 100;
  bool freeze_lp = false;
  bool freeze_lt = false;
  int alternate_every = 0;
  std::optional<LPAction> scripted_lp;
  /// Also write checkpoints every this many iterations (0: only at the end).
  long checkpoint_every = 0;
};

struct EvaluateConfig {
  int episodes = 10;
  bool deterministic_lp = true;
  bool deterministic_lt = false;
};

/// Overrides applied on top of a named preset.
struct ExperimentConfig {
  std::string preset = "diversity";
  std::optional<long> iterations;
  std::optional<int> eval_episodes;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<int> episode_len;
  std::optional<std::vector<std::string>> keys;  // subset of the preset's sweep
  std::optional<rl::TrainerConfig> lp_trainer;
  std::optional<rl::TrainerConfig> lt_trainer;
};

struct RunConfig {
  std::uint64_t seed = 1;
  LogLevel log_level = LogLevel::info;
  int jobs = 1;
  PathsConfig paths;
  CalibrateConfig calibrate;
  EnvConfig env;
  rl::TrainerConfig lp_trainer;
  rl::TrainerConfig lt_trainer;
  TrainConfig train;
  EvaluateConfig evaluate;
  ExperimentConfig experiment;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json param_dist_json(const ParamDist& d);
ParamDist param_dist_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json type_distribution_json(const TypeDistribution& d);
TypeDistribution type_distribution_from_json(const nlohmann::json& j, Family family, const std::string& where);

/// The ECN model pointer is not part of the tree.
nlohmann::json env_config_json(const EnvConfig& c);
EnvConfig env_config_from_json(const nlohmann::json& j);

/// Every field, defaults included.
nlohmann::json run_config_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys and wrong types throw
/// ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// The preset named by the config with its overrides applied.
ExperimentSpec resolve_experiment(const RunConfig& c);

/// Sweep points, seeds and budgets of a resolved experiment.
nlohmann::json experiment_plan_json(const ExperimentSpec& spec);

std::string_view to_string(LogLevel l) noexcept;

} // namespace mktsim
