#include "mktsim/gaussian_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mktsim/error.hpp"

namespace mktsim {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

struct Factor {
  Eigen::MatrixXd L;
  double log_det = 0.0;
};

// Cholesky of cov, escalating the diagonal jitter until it succeeds.
Factor factorize(const Eigen::MatrixXd& cov, double jitter) {
  const auto d = cov.rows();
  Eigen::MatrixXd m = cov;
  double add = 0.0;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(m + add * Eigen::MatrixXd::Identity(d, d));
    if (llt.info() == Eigen::Success) {
      Factor f;
      f.L = llt.matrixL();
      f.log_det = 2.0 * f.L.diagonal().array().log().sum();
      if (std::isfinite(f.log_det)) return f;
    }
    add = add == 0.0 ? std::max(jitter, 1e-12) : add * 10.0;
  }
  throw DegenerateModel("covariance is not positive definite even after jitter");
}

double gaussian_log_pdf(const Factor& f, const Eigen::VectorXd& mu, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = f.L.triangularView<Eigen::Lower>().solve(x - mu);
  return -0.5 * (static_cast<double>(mu.size()) * kLog2Pi + f.log_det + z.squaredNorm());
}

} // namespace

GaussianMixture GaussianMixture::point_mass(const Eigen::VectorXd& point) {
  GaussianMixture gm;
  gm.weights = {1.0};
  gm.means = {point};
  gm.covs = {Eigen::MatrixXd::Zero(point.size(), point.size())};
  return gm;
}

void GaussianMixture::validate() const {
  if (weights.empty()) throw DegenerateModel("mixture has no components");
  if (means.size() != weights.size() || covs.size() != weights.size())
    throw DegenerateModel("mixture component arrays have different lengths");
  const int d = dim();
  double total = 0.0;
  for (int i = 0; i < k(); ++i) {
    if (!(weights[i] >= 0.0)) throw DegenerateModel("negative mixture weight");
    total += weights[i];
    if (means[i].size() != d || covs[i].rows() != d || covs[i].cols() != d)
      throw DegenerateModel("component " + std::to_string(i) + " has inconsistent dimensions");
    if (!means[i].allFinite() || !covs[i].allFinite())
      throw DegenerateModel("component " + std::to_string(i) + " has non-finite parameters");
    psd_sqrt(covs[i]);
  }
  if (std::abs(total - 1.0) > 1e-9) throw DegenerateModel("mixture weights do not sum to one");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw DegenerateModel("covariance is not square");
  if (m.size() == 0) return m;
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw DegenerateModel("eigen decomposition failed");
  const Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-8 * scale) throw DegenerateModel("covariance is not positive semi-definite");
  const Eigen::VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

double log_density(const GaussianMixture& gm, const Eigen::VectorXd& x) {
  std::vector<double> terms(gm.k());
  for (int i = 0; i < gm.k(); ++i) {
    const Factor f = factorize(gm.covs[i], 1e-9);
    terms[i] = std::log(gm.weights[i]) + gaussian_log_pdf(f, gm.means[i], x);
  }
  return log_sum_exp(terms);
}

double log_likelihood(const GaussianMixture& gm, const std::vector<Eigen::VectorXd>& data) {
  std::vector<Factor> factors;
  for (const auto& c : gm.covs) factors.push_back(factorize(c, 1e-9));
  double total = 0.0;
  std::vector<double> terms(gm.k());
  for (const auto& x : data) {
    for (int i = 0; i < gm.k(); ++i)
      terms[i] = std::log(gm.weights[i]) + gaussian_log_pdf(factors[i], gm.means[i], x);
    total += log_sum_exp(terms);
  }
  return total;
}

Eigen::VectorXd sample(const GaussianMixture& gm, Rng& rng) {
  const std::size_t c = rng.categorical(gm.weights);
  const auto d = gm.means[c].size();
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
  return gm.means[c] + psd_sqrt(gm.covs[c]) * z;
}

FitResult fit_mixture(const std::vector<Eigen::VectorXd>& data, int k, std::uint64_t seed,
                      const FitOptions& options) {
  if (k < 1) throw InvalidArgument("mixture needs at least one component");
  if (data.empty()) throw InsufficientData("no data");
  const int d = static_cast<int>(data.front().size());
  const std::size_t n = data.size();
  if (n < static_cast<std::size_t>(10) * k * d)
    throw InsufficientData("need at least " + std::to_string(10 * k * d) + " points, got " +
                           std::to_string(n));
  for (const auto& x : data)
    if (x.size() != d || !x.allFinite()) throw InvalidArgument("data points must be finite and share one dimension");

  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);

  Eigen::VectorXd global_mean = Eigen::VectorXd::Zero(d);
  for (const auto& x : data) global_mean += x;
  global_mean /= static_cast<double>(n);
  Eigen::MatrixXd global_cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& x : data) global_cov += (x - global_mean) * (x - global_mean).transpose();
  global_cov /= static_cast<double>(n);

  // k-means++ seeding.
  Rng rng(derive_seed(seed, 0x6b6d65616e73ULL));
  std::vector<Eigen::VectorXd> centers;
  centers.push_back(data[rng.below(n)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (data[i] - centers.back()).squaredNorm());
    double total = 0.0;
    for (double v : d2) total += v;
    centers.push_back(total > 0.0 ? data[rng.categorical(d2)] : data[rng.below(n)]);
  }

  FitResult result;
  GaussianMixture& gm = result.mixture;
  gm.weights.assign(k, 1.0 / k);
  gm.means = centers;
  gm.covs.assign(k, global_cov + options.jitter * eye);

  Eigen::MatrixXd resp(n, k);
  std::vector<double> terms(k);

  auto e_step = [&]() {
    std::vector<Factor> factors;
    for (const auto& c : gm.covs) factors.push_back(factorize(c, options.jitter));
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c)
        terms[c] = std::log(std::max(gm.weights[c], 1e-300)) + gaussian_log_pdf(factors[c], gm.means[c], data[i]);
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (int c = 0; c < k; ++c) resp(i, c) = std::exp(terms[c] - lse);
    }
    return ll;
  };

  double ll = e_step();
  result.log_likelihood_trace.push_back(ll);
  for (int it = 0; it < options.max_iterations; ++it) {
    for (int c = 0; c < k; ++c) {
      const double nk = resp.col(c).sum();
      if (nk < 1e-12) {
        // Dead component: re-anchor on the global moments with a tiny weight.
        gm.weights[c] = 1e-12;
        gm.means[c] = global_mean;
        gm.covs[c] = global_cov + options.jitter * eye;
        continue;
      }
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
      for (std::size_t i = 0; i < n; ++i) mu += resp(i, c) * data[i];
      mu /= nk;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd diff = data[i] - mu;
        cov.noalias() += resp(i, c) * diff * diff.transpose();
      }
      cov /= nk;
      gm.weights[c] = nk / static_cast<double>(n);
      gm.means[c] = mu;
      gm.covs[c] = 0.5 * (cov + cov.transpose()) + options.jitter * eye;
    }
    double wsum = 0.0;
    for (double w : gm.weights) wsum += w;
    for (double& w : gm.weights) w /= wsum;

    const double next = e_step();
    if (!std::isfinite(next)) throw NumericalError("EM produced a non-finite log-likelihood");
    result.log_likelihood_trace.push_back(next);
    result.iterations = it + 1;
    const double gain = (next - ll) / static_cast<double>(n);
    ll = next;
    if (gain < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

ConditionalMixture::ConditionalMixture(const GaussianMixture& joint, int x_dim, double jitter)
    : x_dim_(x_dim), y_dim_(joint.dim() - x_dim) {
  if (x_dim <= 0 || y_dim_ <= 0) throw DegenerateModel("conditioning split leaves an empty block");
  const int a = x_dim_, b = y_dim_;
  for (int c = 0; c < joint.k(); ++c) {
    const Eigen::MatrixXd& s = joint.covs[c];
    Component comp;
    comp.log_weight = std::log(std::max(joint.weights[c], 1e-300));
    comp.mu_x = joint.means[c].head(a);
    comp.mu_y = joint.means[c].tail(b);
    const Eigen::MatrixXd sxx = s.topLeftCorner(a, a);
    const Eigen::MatrixXd syx = s.bottomLeftCorner(b, a);
    const Eigen::MatrixXd syy = s.bottomRightCorner(b, b);
    const Factor f = factorize(sxx, jitter);
    comp.chol_xx = f.L;
    comp.log_det_xx = f.log_det;
    // gain = Syx Sxx^{-1}  <=>  Sxx gain^T = Sxy
    const Eigen::MatrixXd sxy = syx.transpose();
    const Eigen::MatrixXd tmp = f.L.triangularView<Eigen::Lower>().solve(sxy);
    const Eigen::MatrixXd gt = f.L.transpose().triangularView<Eigen::Upper>().solve(tmp);
    comp.gain = gt.transpose();
    const Eigen::MatrixXd schur = syy - comp.gain * sxy;
    if (!schur.allFinite()) throw DegenerateModel("conditional covariance is not finite");
    comp.cond_sqrt = psd_sqrt(schur);
    comps_.push_back(std::move(comp));
  }
}

std::vector<double> ConditionalMixture::responsibilities(const Eigen::VectorXd& x) const {
  std::vector<double> lp(comps_.size());
  for (std::size_t c = 0; c < comps_.size(); ++c) {
    const Factor f{comps_[c].chol_xx, comps_[c].log_det_xx};
    lp[c] = comps_[c].log_weight + gaussian_log_pdf(f, comps_[c].mu_x, x);
  }
  const double lse = log_sum_exp(lp);
  for (double& v : lp) v = std::exp(v - lse);
  return lp;
}

Eigen::VectorXd ConditionalMixture::conditional_mean(int k, const Eigen::VectorXd& x) const {
  const auto& c = comps_.at(k);
  return c.mu_y + c.gain * (x - c.mu_x);
}

Eigen::VectorXd ConditionalMixture::sample(const Eigen::VectorXd& x, Rng& rng) const {
  if (x.size() != x_dim_) throw ShapeMismatch("conditioning vector has the wrong length");
  const auto r = responsibilities(x);
  const std::size_t k = rng.categorical(r);
  Eigen::VectorXd z(y_dim_);
  for (int i = 0; i < y_dim_; ++i) z[i] = rng.normal();
  return conditional_mean(static_cast<int>(k), x) + comps_[k].cond_sqrt * z;
}

} // namespace mktsim
