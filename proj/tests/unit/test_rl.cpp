#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mktsim/error.hpp"
#include "mktsim/rl/mlp.hpp"
#include "mktsim/rl/policy.hpp"
#include "mktsim/rl/ppo.hpp"
#include "mktsim/rl/trainer.hpp"
#include "support.hpp"

using namespace mktsim;
using namespace mktsim::rl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Central differences of f around p, one coordinate at a time.
template <class F> VectorXd numeric_gradient(F&& f, VectorXd p, double h = 1e-6) {
  VectorXd g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = f(p);
    p[i] = keep - h;
    const double down = f(p);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double rel_error(const VectorXd& a, const VectorXd& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

// Advantage of step t summed term by term from the definition.
std::vector<double> brute_gae(const std::vector<double>& r, const std::vector<double>& v,
                              const std::vector<std::uint8_t>& done, double g, double lam, double last) {
  const std::size_t n = r.size();
  auto value_after = [&](std::size_t j) { return j + 1 < n ? v[j + 1] : last; };
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t j = t; j < n; ++j) {
      const double delta = r[j] + (done[j] ? 0.0 : g * value_after(j)) - v[j];
      adv[t] += weight * delta;
      if (done[j]) break;
      weight *= g * lam;
    }
  }
  return adv;
}

} // namespace

TEST_CASE("mlp backward matches finite differences") {
  Rng rng(1);
  for (const auto& sizes : {std::vector<int>{4, 8, 3}, std::vector<int>{6, 16, 16, 2}, std::vector<int>{3, 1}}) {
    Mlp net(sizes);
    net.init(rng, 0.7);
    const MatrixXd x = random_matrix(sizes.front(), 5, rng);
    const MatrixXd w = random_matrix(sizes.back(), 5, rng);
    Mlp::Cache cache;
    net.forward(x, cache);
    MatrixXd dx;
    const VectorXd g = net.backward(cache, w, &dx);
    auto f = [&](const VectorXd& p) {
      Mlp copy = net;
      copy.set_params(p);
      return (copy.forward(x).array() * w.array()).sum();
    };
    CHECK(rel_error(g, numeric_gradient(f, net.params())) < 1e-5);
    auto fx = [&](const VectorXd& xv) {
      const MatrixXd xm = Eigen::Map<const MatrixXd>(xv.data(), x.rows(), x.cols());
      return (net.forward(xm).array() * w.array()).sum();
    };
    const VectorXd xv = Eigen::Map<const VectorXd>(x.data(), x.size());
    const VectorXd dxv = Eigen::Map<const VectorXd>(dx.data(), dx.size());
    CHECK(rel_error(dxv, numeric_gradient(fx, xv)) < 1e-5);
  }
  Mlp net({2, 3});
  CHECK_THROWS_AS(net.set_params(VectorXd::Zero(4)), ShapeMismatch);
}

TEST_CASE("gae matches the brute-force sum") {
  test::Gen g(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = g.integer(1, 16);
    std::vector<double> r, v;
    std::vector<std::uint8_t> d;
    for (int i = 0; i < n; ++i) {
      r.push_back(g.real(-2, 2));
      v.push_back(g.real(-2, 2));
      d.push_back(g.coin(0.2) ? 1 : 0);
    }
    const double disc = g.real(0.5, 1.0), lam = g.real(0.0, 1.0), last = g.real(-1, 1);
    const auto res = gae(r, v, d, disc, lam, last);
    const auto expect = brute_gae(r, v, d, disc, lam, last);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(res.advantages[static_cast<std::size_t>(i)] - expect[static_cast<std::size_t>(i)]) <= 1e-12);
      CHECK(res.returns[static_cast<std::size_t>(i)] ==
            doctest::Approx(expect[static_cast<std::size_t>(i)] + v[static_cast<std::size_t>(i)]));
    }
  }
  CHECK_THROWS_AS(gae({1.0}, {1.0, 2.0}, {0}, 0.9, 0.9), ShapeMismatch);
}

TEST_CASE("gae with lambda one gives discounted returns") {
  const std::vector<double> r{1, 2, 3}, v{0.5, 0.1, -0.3};
  const auto res = gae(r, v, {0, 0, 1}, 0.9, 1.0);
  CHECK(res.returns[0] == doctest::Approx(1 + 0.9 * 2 + 0.81 * 3));
  CHECK(res.returns[2] == doctest::Approx(3.0));
}

TEST_CASE("squashed gaussian density integrates to one") {
  const VectorXd log_std = VectorXd::Constant(1, std::log(0.7));
  for (double mean : {-1.0, 0.0, 0.8}) {
    for (const auto& [lo, hi] : {std::pair{-1.0, 1.0}, std::pair{0.0, 1.0}, std::pair{-0.3, 2.0}}) {
      const int n = 200000;
      double mass = 0.0;
      for (int k = 0; k < n; ++k) {
        const double a = lo + (hi - lo) * (k + 0.5) / n;
        const double u = std::atanh(2.0 * (a - lo) / (hi - lo) - 1.0);
        const double lp = squashed_log_prob(VectorXd::Constant(1, u), VectorXd::Constant(1, mean), log_std,
                                            VectorXd::Constant(1, lo), VectorXd::Constant(1, hi));
        mass += std::exp(lp) * (hi - lo) / n;
      }
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  // the log-det is stable far in the tails
  CHECK(std::isfinite(squash_log_det(40.0, -1.0, 1.0)));
  CHECK(squash(0.0, -1.0, 3.0) == doctest::Approx(1.0));
}

TEST_CASE("gaussian log prob and log softmax closed forms") {
  VectorXd u(2), m(2), ls(2);
  u << 0.3, -1.0;
  m << 0.0, 0.5;
  ls << std::log(0.5), std::log(2.0);
  double expect = 0.0;
  for (int d = 0; d < 2; ++d) {
    const double s = std::exp(ls[d]);
    expect += -0.5 * std::pow((u[d] - m[d]) / s, 2) - std::log(s) - 0.5 * std::log(2 * std::numbers::pi);
  }
  CHECK(gaussian_log_prob(u, m, ls) == doctest::Approx(expect).epsilon(1e-12));
  MatrixXd logits(3, 2);
  logits << 1, 1000, 2, 1000, 3, 999;
  const MatrixXd ls2 = log_softmax(logits);
  CHECK(ls2.col(0).array().exp().sum() == doctest::Approx(1.0));
  CHECK(ls2.col(1).array().exp().sum() == doctest::Approx(1.0));
  CHECK(ls2(2, 0) == doctest::Approx(3.0 - std::log(std::exp(1) + std::exp(2) + std::exp(3))));
}

TEST_CASE("policy act, log_prob and bounds") {
  Rng rng(5);
  ActionBounds b{-0.5, 1.0, 0.3};
  Policy lp(Family::lp, 7, {16, 16}, b);
  lp.init(rng, 0.2);
  const MatrixXd obs = random_matrix(7, 4, rng);
  const ActResult r = lp.act(obs, rng);
  CHECK((r.log_prob - lp.log_prob(obs, r.raw)).norm() < 1e-12);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const LPAction a = lp.lp_action(r.raw.col(i));
    CHECK_NOTHROW(check_bounds(a, b));
  }
  const ActResult det = lp.act(obs, rng, true);
  CHECK((det.raw - lp.actor().forward(obs)).norm() < 1e-12);
  // the initial hedge fraction comes from the output bias
  const MatrixXd zero = MatrixXd::Zero(7, 1);
  CHECK(lp.lp_action(lp.actor().forward(zero).col(0)).hedge_fraction == doctest::Approx(0.2).epsilon(1e-9));
  CHECK_THROWS(lp.init(rng, 1.0));

  Policy lt(Family::lt, 5, {8});
  lt.init(rng);
  const ActResult rl = lt.act(random_matrix(5, 3, rng), rng);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK((rl.raw(0, i) >= 0 && rl.raw(0, i) <= 2));
}

TEST_CASE("ppo gradients match finite differences of the losses") {
  Rng rng(7);
  for (Family fam : {Family::lp, Family::lt}) {
    Policy p(fam, 6, {12, 12});
    p.init(rng);
    const int n = 9;
    Batch batch;
    batch.obs = random_matrix(6, n, rng);
    const ActResult act = p.act(batch.obs, rng);
    batch.raw = act.raw;
    batch.log_prob = act.log_prob;
    // keep the ratios inside the clip range so the loss is smooth
    for (int i = 0; i < n; ++i) batch.log_prob[i] += 0.05 * rng.normal();
    batch.advantages = random_matrix(n, 1, rng);
    batch.returns = random_matrix(n, 1, rng);
    TrainerConfig cfg;
    cfg.entropy_coef = 0.01;
    cfg.clip = 0.5;
    std::vector<Eigen::Index> idx;
    for (int i = 0; i < n; ++i) idx.push_back(i);
    const PpoGradients g = ppo_gradients(p, batch, idx, cfg);
    auto policy_obj = [&](const VectorXd& params) {
      Policy q = p;
      q.set_policy_params(params);
      const auto gg = ppo_gradients(q, batch, idx, cfg);
      return gg.policy_loss - cfg.entropy_coef * gg.entropy;
    };
    CHECK(rel_error(g.policy_grad, numeric_gradient(policy_obj, p.policy_params())) < 1e-5);
    auto value_obj = [&](const VectorXd& params) {
      Policy q = p;
      q.critic().set_params(params);
      return cfg.value_coef * ppo_gradients(q, batch, idx, cfg).value_loss;
    };
    CHECK(rel_error(g.value_grad, numeric_gradient(value_obj, p.critic().params())) < 1e-5);
  }
}

TEST_CASE("optimizers") {
  VectorXd p = VectorXd::Ones(3);
  VectorXd g(3);
  g << 1.0, -2.0, 0.5;
  Optimizer sgd("sgd", 0.1, 3);
  sgd.step(p, g);
  CHECK(p[1] == doctest::Approx(1.2));
  VectorXd q = VectorXd::Zero(3);
  Optimizer adam("adam", 0.01, 3);
  adam.step(q, g);
  // the first bias-corrected Adam step has length lr per coordinate
  CHECK(q[0] == doctest::Approx(-0.01).epsilon(1e-5));
  CHECK(q[1] == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(adam.steps() == 1);
  CHECK_THROWS_AS(Optimizer("rmsprop", 0.1, 3), InvalidArgument);
}

TEST_CASE("ppo update learns a contextual bandit") {
  Rng rng(11);
  Policy p(Family::lt, 2, {16});
  p.init(rng);
  TrainerConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.entropy_coef = 0.0;
  PpoState st = make_ppo_state(p, cfg);
  auto context = [](int i) {
    MatrixXd o(2, 1);
    o << (i % 2 ? 1.0 : -1.0), 0.5;
    return o;
  };
  auto prob_correct = [&] {
    double s = 0.0;
    for (int i = 0; i < 2; ++i) {
      const MatrixXd lp = log_softmax(p.actor().forward(context(i)));
      s += std::exp(lp(i % 2 ? 1 : 0, 0));
    }
    return s / 2.0;
  };
  const double before = prob_correct();
  for (int it = 0; it < 60; ++it) {
    Batch b;
    const int n = 64;
    b.obs.resize(2, n);
    for (int i = 0; i < n; ++i) b.obs.col(i) = context(i);
    const ActResult a = p.act(b.obs, rng);
    b.raw = a.raw;
    b.log_prob = a.log_prob;
    b.advantages.resize(n);
    for (int i = 0; i < n; ++i) b.advantages[i] = a.raw(0, i) == (i % 2 ? 1.0 : 0.0) ? 1.0 : 0.0;
    b.returns = b.advantages;
    const auto stats = ppo_update(p, st, b, cfg, rng);
    CHECK_FALSE(stats.aborted);
  }
  CHECK(prob_correct() > before);
  CHECK(prob_correct() > 0.9);
}

TEST_CASE("ppo update aborts on non-finite data and keeps parameters") {
  Rng rng(2);
  Policy p(Family::lp, 3, {4});
  p.init(rng);
  TrainerConfig cfg;
  PpoState st = make_ppo_state(p, cfg);
  Batch b;
  b.obs = random_matrix(3, 4, rng);
  const ActResult a = p.act(b.obs, rng);
  b.raw = a.raw;
  b.log_prob = a.log_prob;
  b.advantages = VectorXd::Ones(4);
  b.returns = VectorXd::Ones(4);
  b.returns[2] = std::numeric_limits<double>::quiet_NaN();
  const Policy before = p;
  const auto stats = ppo_update(p, st, b, cfg, rng);
  CHECK(stats.aborted);
  CHECK(p == before);
}

TEST_CASE("checkpoint round trip") {
  TrainOptions o;
  o.env.n_lp = 1;
  o.env.n_lt_flow = 2;
  o.env.episode_len = 8;
  o.lp.episodes_per_update = 1;
  o.lt.episodes_per_update = 1;
  o.lp.optimizer = "adam";
  o.iterations = 2;
  o.seed = 4;
  TrainState s = init_training(o);
  train(s, o);
  const std::string text = checkpoint_json(s.lp, o.lp, s.lp_opt, s.rng, s.iteration);
  const Checkpoint c = checkpoint_from_json(text);
  CHECK(c.policy == s.lp);
  CHECK(c.config == o.lp);
  CHECK(c.rng == s.rng);
  CHECK(c.iteration == 2);
  CHECK(c.opt.policy_opt.m() == s.lp_opt.policy_opt.m());
  CHECK(c.opt.policy_opt.steps() == s.lp_opt.policy_opt.steps());
  CHECK_THROWS_AS(checkpoint_from_json("{\"format\": 1}"), SchemaError);
  CHECK_THROWS_AS(checkpoint_from_json("not json"), SchemaError);
}

TEST_CASE("training is reproducible and independent of the worker count") {
  TrainOptions o;
  o.env.n_lp = 2;
  o.env.n_lt_flow = 3;
  o.env.n_lt_pnl = 1;
  o.env.episode_len = 12;
  o.lp.episodes_per_update = 3;
  o.lt.episodes_per_update = 3;
  o.iterations = 3;
  o.seed = 9;
  o.jobs = 1;
  const TrainState a = train(o);
  o.jobs = 3;
  const TrainState b = train(o);
  CHECK(a.lp == b.lp);
  CHECK(a.lt == b.lt);
  CHECK(curve_csv(a.curve) == curve_csv(b.curve));
  o.seed = 10;
  CHECK_FALSE(train(o).lp == a.lp);
}

TEST_CASE("scripted LPs are not trained") {
  TrainOptions o;
  o.env.n_lp = 1;
  o.env.n_lt_flow = 2;
  o.env.episode_len = 6;
  o.lp.episodes_per_update = 1;
  o.lt.episodes_per_update = 1;
  o.iterations = 2;
  o.scripted_lp = LPAction{0.0, 0.0, 0.0};
  TrainState s = init_training(o);
  const Policy lp0 = s.lp, lt0 = s.lt;
  train(s, o);
  CHECK(s.lp == lp0);
  CHECK_FALSE(s.lt == lt0);
}
