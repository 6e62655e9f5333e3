#include "mktsim/rl/policy.hpp"

#include <cmath>
#include <numbers>

#include "mktsim/error.hpp"

namespace mktsim::rl {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;

double softplus(double x) noexcept { return x > 30.0 ? x : std::log1p(std::exp(x)); }

std::vector<int> chain(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}
} // namespace

double squash(double u, double lo, double hi) noexcept { return lo + (hi - lo) * 0.5 * (std::tanh(u) + 1.0); }

double squash_log_det(double u, double lo, double hi) noexcept {
  // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
  return std::log(0.5 * (hi - lo)) + 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
}

double gaussian_log_prob(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::VectorXd& log_std) {
  double lp = 0.0;
  for (Eigen::Index d = 0; d < u.size(); ++d) {
    const double z = (u[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -0.5 * z * z - log_std[d] - 0.5 * kLog2Pi;
  }
  return lp;
}

double squashed_log_prob(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::VectorXd& log_std, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  double lp = gaussian_log_prob(u, mean, log_std);
  for (Eigen::Index d = 0; d < u.size(); ++d) lp -= squash_log_det(u[d], lo[d], hi[d]);
  return lp;
}

Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

Policy::Policy(Family family, int obs_dim, std::vector<int> hidden, const ActionBounds& bounds,
               double init_log_std)
    : family_(family), hidden_(std::move(hidden)) {
  const int out = family == Family::lp ? 3 : kLtActionCount;
  actor_ = Mlp(chain(obs_dim, hidden_, out));
  critic_ = Mlp(chain(obs_dim, hidden_, 1));
  if (family == Family::lp) {
    log_std_ = Eigen::VectorXd::Constant(3, init_log_std);
    lo_ = Eigen::Vector3d(bounds.eps_sym_min, -bounds.eps_asym_max, 0.0);
    hi_ = Eigen::Vector3d(bounds.eps_sym_max, bounds.eps_asym_max, 1.0);
  }
}

void Policy::init(Rng& rng, double initial_hedge) {
  if (!(initial_hedge > 0.0 && initial_hedge < 1.0)) throw InvalidArgument("initial hedge must be in (0, 1)");
  actor_.init(rng, 0.01);
  critic_.init(rng, 1.0);
  // the output bias is the tail of the parameter vector
  if (family_ == Family::lp) actor_.params()[actor_.params().size() - 1] = std::atanh(2.0 * initial_hedge - 1.0);
}

std::size_t Policy::policy_param_count() const {
  return static_cast<std::size_t>(actor_.params().size() + log_std_.size());
}

Eigen::VectorXd Policy::policy_params() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(policy_param_count()));
  p << actor_.params(), log_std_;
  return p;
}

void Policy::set_policy_params(const Eigen::VectorXd& p) {
  if (p.size() != static_cast<Eigen::Index>(policy_param_count())) throw ShapeMismatch("policy parameter count");
  actor_.set_params(p.head(actor_.params().size()));
  log_std_ = p.tail(log_std_.size());
}

ActResult Policy::act(const Eigen::MatrixXd& obs, Rng& rng, bool deterministic) const {
  const Eigen::MatrixXd out = actor_.forward(obs);
  const Eigen::Index n = obs.cols();
  ActResult r;
  r.log_prob.resize(n);
  r.value = values(obs);
  if (family_ == Family::lp) {
    r.raw.resize(3, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index d = 0; d < 3; ++d)
        r.raw(d, c) = deterministic ? out(d, c) : out(d, c) + std::exp(log_std_[d]) * rng.normal();
      r.log_prob[c] = gaussian_log_prob(r.raw.col(c), out.col(c), log_std_);
    }
  } else {
    const Eigen::MatrixXd lp = log_softmax(out);
    r.raw.resize(1, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      Eigen::Index k = 0;
      if (deterministic) {
        lp.col(c).maxCoeff(&k);
      } else {
        const Eigen::VectorXd p = lp.col(c).array().exp();
        k = static_cast<Eigen::Index>(rng.categorical(p));
      }
      r.raw(0, c) = static_cast<double>(k);
      r.log_prob[c] = lp(k, c);
    }
  }
  return r;
}

Eigen::VectorXd Policy::values(const Eigen::MatrixXd& obs) const { return critic_.forward(obs).row(0).transpose(); }

Eigen::VectorXd Policy::log_prob(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& raw) const {
  const Eigen::MatrixXd out = actor_.forward(obs);
  Eigen::VectorXd r(obs.cols());
  if (family_ == Family::lp) {
    for (Eigen::Index c = 0; c < obs.cols(); ++c) r[c] = gaussian_log_prob(raw.col(c), out.col(c), log_std_);
  } else {
    const Eigen::MatrixXd lp = log_softmax(out);
    for (Eigen::Index c = 0; c < obs.cols(); ++c) r[c] = lp(static_cast<Eigen::Index>(raw(0, c)), c);
  }
  return r;
}

LPAction Policy::lp_action(const Eigen::Ref<const Eigen::VectorXd>& raw) const {
  return LPAction{squash(raw[0], lo_[0], hi_[0]), squash(raw[1], lo_[1], hi_[1]), squash(raw[2], lo_[2], hi_[2])};
}

bool Policy::operator==(const Policy& o) const {
  return family_ == o.family_ && hidden_ == o.hidden_ && actor_.layer_sizes() == o.actor_.layer_sizes() &&
         actor_.params() == o.actor_.params() && critic_.params() == o.critic_.params() &&
         log_std_.size() == o.log_std_.size() && log_std_ == o.log_std_;
}

} // namespace mktsim::rl
