#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mktsim/rl/policy.hpp"
#include "mktsim/rng.hpp"

namespace mktsim::rl {

struct TrainerConfig {
  double discount = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch = 256;
  double learning_rate = 0.01;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int episodes_per_update = 4;
  std::string optimizer = "sgd";  // sgd | adam
  std::vector<int> hidden{64, 64};
  double init_log_std = -1.5;  // LP only
  double init_hedge = 0.05;  // LP only

  /// Throws InvalidArgument.
  void validate() const;
  bool operator==(const TrainerConfig&) const = default;
};

/// Advantages A_t = sum_k (discount lambda)^k delta_{t+k} within an episode
/// and returns A_t + V_t. dones[t] marks the last step of an episode;
/// last_value bootstraps a trailing unfinished episode.
struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};
GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              const std::vector<std::uint8_t>& dones, double discount, double lambda, double last_value = 0.0);

/// Transitions of one family, observations and raw actions as columns.
struct Batch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd raw;
  Eigen::VectorXd log_prob;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  Eigen::Index size() const noexcept { return obs.cols(); }
};

/// Plain SGD or Adam over one flat parameter vector.
class Optimizer {
public:
  Optimizer() = default;
  Optimizer(std::string kind, double lr, Eigen::Index n);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  const std::string& kind() const noexcept { return kind_; }
  double learning_rate() const noexcept { return lr_; }
  long steps() const noexcept { return t_; }
  const Eigen::VectorXd& m() const noexcept { return m_; }
  const Eigen::VectorXd& v() const noexcept { return v_; }
  void restore(long steps, Eigen::VectorXd m, Eigen::VectorXd v);

private:
  std::string kind_ = "sgd";
  double lr_ = 0.01;
  long t_ = 0;
  Eigen::VectorXd m_, v_;
};

struct PpoState {
  Optimizer policy_opt;
  Optimizer value_opt;
};

PpoState make_ppo_state(const Policy& policy, const TrainerConfig& cfg);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  int minibatches = 0;
  bool aborted = false;
  std::string diagnostics;  // reason when aborted
};

/// Loss terms and gradients of one minibatch. Exposed for testing.
struct PpoGradients {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  Eigen::VectorXd policy_grad;  // actor params then log-std
  Eigen::VectorXd value_grad;
};
PpoGradients ppo_gradients(const Policy& policy, const Batch& batch, const std::vector<Eigen::Index>& idx,
                           const TrainerConfig& cfg);

/// Clipped-surrogate update with value loss and entropy bonus. Advantages
/// are normalized per batch; gradients are norm-clipped separately for the
/// policy and the value net. A non-finite loss or gradient aborts the update
/// and restores the parameters held before it.
PpoStats ppo_update(Policy& policy, PpoState& state, const Batch& batch, const TrainerConfig& cfg, Rng& rng);

} // namespace mktsim::rl
