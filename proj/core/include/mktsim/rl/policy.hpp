#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mktsim/agents.hpp"
#include "mktsim/rl/mlp.hpp"
#include "mktsim/rng.hpp"

namespace mktsim::rl {

/// Maps a raw Gaussian sample u to lo + (hi - lo) (tanh(u) + 1) / 2.
double squash(double u, double lo, double hi) noexcept;

/// log |d squash / du|.
double squash_log_det(double u, double lo, double hi) noexcept;

/// Log density of a diagonal Gaussian at u (no squashing correction).
double gaussian_log_prob(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::VectorXd& log_std);

/// Log density of the squashed action squash(u) under the squashed
/// Gaussian: the Gaussian density of u minus the log-Jacobian.
double squashed_log_prob(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::VectorXd& log_std, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

/// Column-wise log-softmax.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits);

/// Result of acting on a batch of observations (one column per agent).
struct ActResult {
  Eigen::MatrixXd raw;       // LP: pre-squash u (3 x n); LT: chosen index (1 x n)
  Eigen::VectorXd log_prob;  // of raw under the current policy
  Eigen::VectorXd value;
};

/// Shared type-conditioned policy of one family with its own value net.
/// LP: diagonal Gaussian over (eps_sym, eps_asym, h) with a learned
/// state-independent log-std, squashed into the action bounds.
/// LT: categorical over (sell, buy, hold).
class Policy {
public:
  Policy() = default;
  Policy(Family family, int obs_dim, std::vector<int> hidden, const ActionBounds& bounds = {},
         double init_log_std = -0.5);

  /// LP: the initial mean hedge fraction is set through the output bias.
  void init(Rng& rng, double initial_hedge = 0.5);

  Family family() const noexcept { return family_; }
  int obs_dim() const noexcept { return actor_.input_size(); }
  int action_dim() const noexcept { return actor_.output_size(); }
  const std::vector<int>& hidden() const noexcept { return hidden_; }

  Mlp& actor() noexcept { return actor_; }
  const Mlp& actor() const noexcept { return actor_; }
  Mlp& critic() noexcept { return critic_; }
  const Mlp& critic() const noexcept { return critic_; }
  Eigen::VectorXd& log_std() noexcept { return log_std_; }
  const Eigen::VectorXd& log_std() const noexcept { return log_std_; }
  const Eigen::VectorXd& lo() const noexcept { return lo_; }
  const Eigen::VectorXd& hi() const noexcept { return hi_; }

  /// Actor parameters followed by log-std (LP only).
  Eigen::VectorXd policy_params() const;
  void set_policy_params(const Eigen::VectorXd& p);
  std::size_t policy_param_count() const;

  /// Samples (or, when deterministic, takes the mode of) the action
  /// distribution for each column of obs.
  ActResult act(const Eigen::MatrixXd& obs, Rng& rng, bool deterministic = false) const;

  Eigen::VectorXd values(const Eigen::MatrixXd& obs) const;

  /// Log-probabilities of given raw actions.
  Eigen::VectorXd log_prob(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& raw) const;

  LPAction lp_action(const Eigen::Ref<const Eigen::VectorXd>& raw) const;
  static LtChoice lt_choice(double raw) { return static_cast<LtChoice>(static_cast<int>(raw)); }

  bool operator==(const Policy& o) const;

private:
  Family family_ = Family::lp;
  std::vector<int> hidden_;
  Mlp actor_;
  Mlp critic_;
  Eigen::VectorXd log_std_;
  Eigen::VectorXd lo_, hi_;
};

} // namespace mktsim::rl
