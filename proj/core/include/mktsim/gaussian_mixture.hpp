#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mktsim/rng.hpp"

namespace mktsim {

struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;

  int k() const noexcept { return static_cast<int>(weights.size()); }
  int dim() const noexcept { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

  /// Throws DegenerateModel on inconsistent shapes, off-simplex weights or
  /// covariances that are not positive semi-definite.
  void validate() const;

  /// Single-component mixture with zero covariance at `point`.
  static GaussianMixture point_mass(const Eigen::VectorXd& point);
};

/// log sum_k w_k N(x; mu_k, Sigma_k).
double log_density(const GaussianMixture& gm, const Eigen::VectorXd& x);

/// Sum of log_density over the data set.
double log_likelihood(const GaussianMixture& gm, const std::vector<Eigen::VectorXd>& data);

/// One draw. Zero-covariance components return their mean exactly.
Eigen::VectorXd sample(const GaussianMixture& gm, Rng& rng);

struct FitOptions {
  int max_iterations = 200;
  double tolerance = 1e-6;  // on the mean per-sample log-likelihood
  double jitter = 1e-6;
};

struct FitResult {
  GaussianMixture mixture;
  std::vector<double> log_likelihood_trace;  // total log-likelihood after init and each M-step
  int iterations = 0;
  bool converged = false;
};

/// Expectation-maximization with k-means++ seeding. Requires at least
/// 10*k*d points (InsufficientData otherwise).
FitResult fit_mixture(const std::vector<Eigen::VectorXd>& data, int k, std::uint64_t seed,
                      const FitOptions& options = {});

/// Conditional sampler for a joint mixture over [x; y]: picks a component
/// by its posterior responsibility for x, then draws y from that
/// component's Gaussian conditional (Schur complement).
class ConditionalMixture {
public:
  ConditionalMixture() = default;
  ConditionalMixture(const GaussianMixture& joint, int x_dim, double jitter = 1e-6);

  int x_dim() const noexcept { return x_dim_; }
  int y_dim() const noexcept { return y_dim_; }

  /// Posterior component probabilities given x.
  std::vector<double> responsibilities(const Eigen::VectorXd& x) const;

  /// E[y | x, component k].
  Eigen::VectorXd conditional_mean(int k, const Eigen::VectorXd& x) const;

  Eigen::VectorXd sample(const Eigen::VectorXd& x, Rng& rng) const;

private:
  struct Component {
    double log_weight = 0.0;
    Eigen::VectorXd mu_x, mu_y;
    Eigen::MatrixXd chol_xx;     // lower Cholesky factor of Sigma_xx (+ jitter)
    double log_det_xx = 0.0;
    Eigen::MatrixXd gain;        // Sigma_yx Sigma_xx^{-1}
    Eigen::MatrixXd cond_sqrt;   // square root of the Schur complement
  };
  std::vector<Component> comps_;
  int x_dim_ = 0;
  int y_dim_ = 0;
};

/// Symmetric PSD square root factor S with S S^T = M. Throws
/// DegenerateModel when M has materially negative eigenvalues.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

} // namespace mktsim
