#include "mktsim/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mktsim/error.hpp"

namespace mktsim::rl {

void TrainerConfig::validate() const {
  if (!(discount >= 0.0 && discount <= 1.0)) throw InvalidArgument("discount must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw InvalidArgument("gae_lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw InvalidArgument("clip must be positive");
  if (epochs < 1 || minibatch < 1 || episodes_per_update < 1)
    throw InvalidArgument("epochs, minibatch and episodes_per_update must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (!(entropy_coef >= 0.0 && value_coef >= 0.0)) throw InvalidArgument("loss coefficients must be non-negative");
  if (!(max_grad_norm > 0.0)) throw InvalidArgument("max_grad_norm must be positive");
  if (optimizer != "sgd" && optimizer != "adam") throw InvalidArgument("optimizer must be 'sgd' or 'adam'");
  if (!(init_hedge > 0.0 && init_hedge < 1.0)) throw InvalidArgument("init_hedge must lie in (0, 1)");
  if (hidden.empty()) throw InvalidArgument("at least one hidden layer is required");
  for (int h : hidden)
    if (h < 1) throw InvalidArgument("hidden layer sizes must be positive");
}

GaeResult gae(const std::vector<double>& rewards, const std::vector<double>& values,
              const std::vector<std::uint8_t>& dones, double discount, double lambda, double last_value) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ShapeMismatch("gae: rewards, values and dones differ in length");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = last_value;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + discount * next_value * live - values[k];
    next_adv = delta + discount * lambda * live * next_adv;
    r.advantages[k] = next_adv;
    r.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return r;
}

Optimizer::Optimizer(std::string kind, double lr, Eigen::Index n) : kind_(std::move(kind)), lr_(lr) {
  if (kind_ != "sgd" && kind_ != "adam") throw InvalidArgument("unknown optimizer " + kind_);
  if (kind_ == "adam") {
    m_ = Eigen::VectorXd::Zero(n);
    v_ = Eigen::VectorXd::Zero(n);
  }
}

void Optimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size()) throw ShapeMismatch("optimizer gradient size");
  ++t_;
  if (kind_ == "sgd") {
    params -= lr_ * grad;
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m_ = b1 * m_ + (1.0 - b1) * grad;
  v_ = b2 * v_ + (1.0 - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
}

void Optimizer::restore(long steps, Eigen::VectorXd m, Eigen::VectorXd v) {
  t_ = steps;
  if (kind_ == "adam") {
    if (m.size() != m_.size() || v.size() != v_.size()) throw ShapeMismatch("optimizer state size");
    m_ = std::move(m);
    v_ = std::move(v);
  }
}

PpoState make_ppo_state(const Policy& policy, const TrainerConfig& cfg) {
  return PpoState{Optimizer(cfg.optimizer, cfg.learning_rate, static_cast<Eigen::Index>(policy.policy_param_count())),
                  Optimizer(cfg.optimizer, cfg.learning_rate, policy.critic().params().size())};
}

namespace {
constexpr double kGaussEntropyConst = 1.4189385332046727;  // 0.5 (1 + log 2 pi)

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}

void clip_norm(Eigen::VectorXd& g, double max_norm) {
  const double n = g.norm();
  if (n > max_norm) g *= max_norm / n;
}
} // namespace

PpoGradients ppo_gradients(const Policy& policy, const Batch& batch, const std::vector<Eigen::Index>& idx,
                           const TrainerConfig& cfg) {
  if (idx.empty()) throw InvalidArgument("empty minibatch");
  const auto b = static_cast<Eigen::Index>(idx.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  const Eigen::MatrixXd x = gather(batch.obs, idx);
  const Eigen::MatrixXd raw = gather(batch.raw, idx);

  Mlp::Cache cache;
  const Eigen::MatrixXd out = policy.actor().forward(x, cache);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  PpoGradients g;
  Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(policy.log_std().size());

  const bool lp = policy.family() == Family::lp;
  Eigen::MatrixXd log_p;
  if (!lp) log_p = log_softmax(out);

  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index k = idx[static_cast<std::size_t>(i)];
    const double adv = batch.advantages[k];
    const double old_lp = batch.log_prob[k];
    double new_lp = 0.0;
    if (lp) new_lp = gaussian_log_prob(raw.col(i), out.col(i), policy.log_std());
    else new_lp = log_p(static_cast<Eigen::Index>(raw(0, i)), i);
    const double ratio = std::exp(new_lp - old_lp);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double s1 = ratio * adv, s2 = clipped * adv;
    g.policy_loss -= std::min(s1, s2) * inv_b;
    if (std::abs(ratio - 1.0) > cfg.clip) g.clip_fraction += inv_b;
    g.approx_kl += (old_lp - new_lp) * inv_b;
    // d loss / d new_lp
    const double dl = s1 <= s2 ? -adv * ratio * inv_b : 0.0;
    if (lp) {
      for (Eigen::Index d = 0; d < out.rows(); ++d) {
        const double inv_var = std::exp(-2.0 * policy.log_std()[d]);
        const double diff = raw(d, i) - out(d, i);
        d_out(d, i) = dl * diff * inv_var;
        d_log_std[d] += dl * (diff * diff * inv_var - 1.0);
      }
    } else {
      const Eigen::Index a = static_cast<Eigen::Index>(raw(0, i));
      const Eigen::VectorXd p = log_p.col(i).array().exp();
      const double h = -(p.array() * log_p.col(i).array()).sum();
      g.entropy += h * inv_b;
      for (Eigen::Index c = 0; c < out.rows(); ++c) {
        const double dlogp = (c == a ? 1.0 : 0.0) - p[c];
        const double dh = -p[c] * (log_p(c, i) + h);
        d_out(c, i) = dl * dlogp - cfg.entropy_coef * inv_b * dh;
      }
    }
  }
  if (lp) {
    g.entropy = (policy.log_std().array() + kGaussEntropyConst).sum();
    d_log_std.array() -= cfg.entropy_coef;
  }
  g.policy_grad.resize(static_cast<Eigen::Index>(policy.policy_param_count()));
  g.policy_grad << policy.actor().backward(cache, d_out), d_log_std;

  Mlp::Cache vcache;
  const Eigen::MatrixXd v = policy.critic().forward(x, vcache);
  Eigen::MatrixXd dv(1, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double err = v(0, i) - batch.returns[idx[static_cast<std::size_t>(i)]];
    g.value_loss += 0.5 * err * err * inv_b;
    dv(0, i) = cfg.value_coef * err * inv_b;
  }
  g.value_grad = policy.critic().backward(vcache, dv);
  return g;
}

PpoStats ppo_update(Policy& policy, PpoState& state, const Batch& batch, const TrainerConfig& cfg, Rng& rng) {
  PpoStats stats;
  const Eigen::Index n = batch.size();
  if (n == 0) throw InvalidArgument("ppo_update needs at least one transition");
  if (batch.raw.cols() != n || batch.log_prob.size() != n || batch.advantages.size() != n || batch.returns.size() != n)
    throw ShapeMismatch("batch fields differ in length");

  Batch norm = batch;
  const double mean = batch.advantages.mean();
  const double sd = std::sqrt((batch.advantages.array() - mean).square().mean());
  norm.advantages = (batch.advantages.array() - mean) / (sd + 1e-8);

  const Eigen::VectorXd saved_policy = policy.policy_params();
  const Eigen::VectorXd saved_value = policy.critic().params();
  const PpoState saved_state = state;

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(cfg.minibatch)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(cfg.minibatch));
      const std::vector<Eigen::Index> idx(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                          perm.begin() + static_cast<std::ptrdiff_t>(end));
      PpoGradients g = ppo_gradients(policy, norm, idx, cfg);
      const bool finite = std::isfinite(g.policy_loss) && std::isfinite(g.value_loss) && g.policy_grad.allFinite() &&
                          g.value_grad.allFinite();
      if (!finite) {
        policy.set_policy_params(saved_policy);
        policy.critic().set_params(saved_value);
        state = saved_state;
        stats.aborted = true;
        stats.diagnostics = "non-finite loss or gradient at epoch " + std::to_string(epoch) + ", minibatch " +
                            std::to_string(start / static_cast<std::size_t>(cfg.minibatch)) +
                            ": policy_loss=" + std::to_string(g.policy_loss) +
                            " value_loss=" + std::to_string(g.value_loss);
        return stats;
      }
      clip_norm(g.policy_grad, cfg.max_grad_norm);
      clip_norm(g.value_grad, cfg.max_grad_norm);
      Eigen::VectorXd p = policy.policy_params();
      state.policy_opt.step(p, g.policy_grad);
      policy.set_policy_params(p);
      state.value_opt.step(policy.critic().params(), g.value_grad);

      stats.policy_loss += g.policy_loss;
      stats.value_loss += g.value_loss;
      stats.entropy += g.entropy;
      stats.clip_fraction += g.clip_fraction;
      stats.approx_kl += g.approx_kl;
      ++stats.minibatches;
    }
  }
  const double m = stats.minibatches;
  stats.policy_loss /= m;
  stats.value_loss /= m;
  stats.entropy /= m;
  stats.clip_fraction /= m;
  stats.approx_kl /= m;
  return stats;
}

} // namespace mktsim::rl
