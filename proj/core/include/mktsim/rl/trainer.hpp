#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mktsim/env.hpp"
#include "mktsim/rl/policy.hpp"
#include "mktsim/rl/ppo.hpp"
#include "mktsim/rng.hpp"

namespace mktsim::rl {

/// Transitions of one family from one episode. Column agent * T + t holds
/// agent's step t, so each agent's trajectory is contiguous.
struct FamilyBuffer {
  int agents = 0;
  int steps = 0;
  Eigen::MatrixXd obs;
  Eigen::MatrixXd raw;
  Eigen::VectorXd log_prob;
  Eigen::VectorXd values;
  Eigen::VectorXd rewards;

  double reward_sum() const { return rewards.sum(); }
};

struct EpisodeOptions {
  bool deterministic_lp = false;  // act with the distribution's mode
  bool deterministic_lt = false;
  bool record = true;  // keep transitions
  std::optional<LPAction> scripted_lp;
};

struct EpisodeResult {
  FamilyBuffer lp;
  FamilyBuffer lt;
};

/// Plays one episode from env.reset(seed). on_step, when set, sees the env
/// after every completed step.
EpisodeResult run_episode(Env& env, const Policy& lp, const Policy& lt, std::uint64_t seed,
                          const EpisodeOptions& opts,
                          const std::function<void(const Env&)>& on_step = {});

/// Builds a PPO batch from episodes, running GAE per agent trajectory.
Batch make_batch(const std::vector<const FamilyBuffer*>& buffers, const TrainerConfig& cfg);

struct TrainOptions {
  EnvConfig env;
  TrainerConfig lp;
  TrainerConfig lt;
  long iterations = 0;
  std::uint64_t seed = 0;
  int jobs = 1;
  /// When set, every LP plays this fixed action and the LP policy is not trained.
  std::optional<LPAction> scripted_lp;
  bool freeze_lp = false;
  bool freeze_lt = false;
  /// > 0: the families take turns, switching every this many iterations.
  int alternate_every = 0;
};

struct CurveRow {
  long iteration = 0;
  long env_steps = 0;
  double lp_mean_return = 0.0;  // per agent per episode
  double lt_mean_return = 0.0;
  PpoStats lp_stats;
  PpoStats lt_stats;
};

struct TrainState {
  Policy lp;
  Policy lt;
  PpoState lp_opt;
  PpoState lt_opt;
  Rng rng;
  long iteration = 0;
  std::vector<CurveRow> curve;
};

TrainState init_training(const TrainOptions& opts);

/// Runs iterations until state.iteration == opts.iterations. Each iteration
/// collects episodes in parallel, merges them by episode index and updates
/// both families from their own transitions.
void train(TrainState& state, const TrainOptions& opts, const std::function<void(const CurveRow&)>& on_iteration = {});

TrainState train(const TrainOptions& opts);

/// Seed of episode e of a training iteration.
std::uint64_t episode_seed(std::uint64_t seed, long iteration, long episode);

std::string curve_csv(const std::vector<CurveRow>& curve);

/// Checkpoint of one family: network shapes and weights, log-std, trainer
/// configuration, optimizer state, the training RNG and the iteration.
std::string checkpoint_json(const Policy& policy, const TrainerConfig& cfg, const PpoState& opt, const Rng& rng,
                            long iteration);

struct Checkpoint {
  Policy policy;
  TrainerConfig config;
  PpoState opt;
  Rng rng;
  long iteration = 0;
};
/// Throws SchemaError on malformed input.
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Policy& policy, const TrainerConfig& cfg,
                     const PpoState& opt, const Rng& rng, long iteration);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json trainer_config_json(const TrainerConfig& cfg);
TrainerConfig trainer_config_from_json(const nlohmann::json& j);

} // namespace mktsim::rl
