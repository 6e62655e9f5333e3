#include <doctest.h>

#include <cmath>

#include "mktsim/env.hpp"
#include "mktsim/error.hpp"
#include "support.hpp"

using namespace mktsim;
using mktsim::test::Gen;

namespace {

EnvConfig small_config(int n_lp = 2, int n_flow = 3, int n_pnl = 1, int len = 20) {
  EnvConfig c;
  c.n_lp = n_lp;
  c.n_lt_flow = n_flow;
  c.n_lt_pnl = n_pnl;
  c.episode_len = len;
  return c;
}

std::vector<LtChoice> all(int n, LtChoice c) { return std::vector<LtChoice>(static_cast<std::size_t>(n), c); }

struct Totals {
  double inventory = 0.0, spread = 0.0, total = 0.0;
};

Totals totals(const Env& env) {
  Totals t;
  auto add = [&](const PnLLedger& l) {
    t.inventory += l.inventory();
    t.spread += l.spread_pnl_cum();
    t.total += l.total_pnl_cum();
  };
  for (const auto& a : env.lps()) add(a.ledger);
  for (const auto& a : env.lts()) add(a.ledger);
  add(env.ecn_ledger());
  return t;
}

} // namespace

TEST_CASE("episode runs to its length with consistent shapes") {
  Env env(small_config());
  env.reset(3);
  CHECK(env.lp_observations().rows() == static_cast<Eigen::Index>(env.lp_obs_size()));
  CHECK(env.lp_observations().cols() == 2);
  int steps = 0;
  bool done = false;
  while (!done) {
    env.quote(std::vector<LPAction>(2));
    CHECK(env.lt_observations().cols() == 4);
    done = env.trade(all(4, LtChoice::buy));
    ++steps;
  }
  CHECK(steps == 20);
  CHECK(env.done());
}

TEST_CASE("call order and shape errors") {
  Env env(small_config());
  env.reset(1);
  CHECK_THROWS_AS(env.trade(all(4, LtChoice::hold)), InvalidArgument);
  CHECK_THROWS_AS(env.lt_observations(), InvalidArgument);
  CHECK_THROWS_AS(env.quote(std::vector<LPAction>(3)), ShapeMismatch);
  CHECK_THROWS_AS(env.quote({LPAction{2.0, 0.0, 0.0}, LPAction{}}), ActionOutOfBounds);
  env.quote(std::vector<LPAction>(2));
  CHECK_THROWS_AS(env.trade(all(2, LtChoice::hold)), ShapeMismatch);
}

TEST_CASE("same seed, same episode") {
  auto run = [](std::uint64_t seed) {
    Env env(small_config(2, 3, 1, 30));
    env.reset(seed);
    Gen g(seed);
    std::vector<double> trace;
    bool done = false;
    while (!done) {
      std::vector<LPAction> a;
      for (int j = 0; j < 2; ++j) a.push_back({g.real(-1, 1), g.real(-0.2, 0.2), g.real(0, 1)});
      env.quote(a);
      std::vector<LtChoice> c;
      for (int i = 0; i < 4; ++i) c.push_back(static_cast<LtChoice>(g.integer(0, 2)));
      done = env.trade(c);
      trace.push_back(env.ref().p_mid);
      for (double r : env.lp_rewards()) trace.push_back(r);
      for (double r : env.lt_rewards()) trace.push_back(r);
    }
    return trace;
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("routing: best price wins, ties go to the lowest LP id, ECN only when strictly better") {
  EnvConfig c = small_config(2, 2, 0, 5);
  c.evolve_ecn = false;
  Env env(c);
  env.reset(2);
  // identical quotes at the touch: LP 0 takes everything
  env.quote({LPAction{}, LPAction{}});
  env.trade({LtChoice::buy, LtChoice::sell});
  CHECK(env.last_record().lts[0].counterparty == AgentId{0});
  CHECK(env.last_record().lts[1].counterparty == AgentId{0});
  CHECK(env.market_share_volumes()[0] == 2.0);
  // LP 1 tighter on the ask only
  env.quote({LPAction{}, LPAction{-0.5, -0.25, 0.0}});
  env.trade({LtChoice::buy, LtChoice::sell});
  CHECK(env.last_record().lts[0].counterparty == AgentId{1});
  CHECK(env.last_record().lts[1].counterparty == AgentId{0});
  // both LPs wider than the ECN touch
  env.quote({LPAction{1.0, 0.0, 0.0}, LPAction{1.0, 0.0, 0.0}});
  env.trade({LtChoice::buy, LtChoice::hold});
  CHECK(env.last_record().lts[0].counterparty == kEcnId);
  CHECK_FALSE(env.last_record().lts[1].counterparty.has_value());
}

TEST_CASE("no connected venue means no trade") {
  EnvConfig c = small_config(1, 2, 0, 5);
  c.lt_flow_types.connect_prob_lp = ParamDist::fixed(0.0);
  c.lt_flow_types.connect_prob_ecn = ParamDist::fixed(0.0);
  Env env(c);
  env.reset(1);
  env.quote({LPAction{}});
  env.trade({LtChoice::buy, LtChoice::sell});
  for (const auto& r : env.last_record().lts) CHECK_FALSE(r.counterparty.has_value());
  for (const auto& a : env.lts()) CHECK(a.ledger.inventory() == 0.0);
}

TEST_CASE("hedge executes trunc(h |z|) against the ECN") {
  EnvConfig c = small_config(1, 6, 0, 5);
  c.evolve_ecn = false;
  Env env(c);
  env.reset(4);
  env.quote({LPAction{-0.5, 0.0, 0.0}});
  env.trade(all(6, LtChoice::buy));
  CHECK(env.lps()[0].ledger.inventory() == -6.0);
  env.quote({LPAction{-0.5, 0.0, 0.6}});
  env.trade(all(6, LtChoice::hold));
  CHECK(env.last_record().lps[0].hedge_qty == 3.0);
  CHECK(env.lps()[0].ledger.inventory() == -3.0);
}

TEST_CASE("property: trades are zero-sum across LPs, LTs and the ECN") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    EnvConfig c = small_config(3, 4, 2, 40);
    c.trend.amplitude = seed % 2 ? 0.05 : 0.0;
    Env env(c);
    env.reset(seed);
    Gen g(seed + 100);
    bool done = false;
    while (!done) {
      std::vector<LPAction> a;
      for (int j = 0; j < 3; ++j) a.push_back({g.real(-1, 1), g.real(-0.5, 0.5), g.real(0, 1)});
      env.quote(a);
      std::vector<LtChoice> ch;
      for (int i = 0; i < 6; ++i) ch.push_back(static_cast<LtChoice>(g.integer(0, 2)));
      done = env.trade(ch);
      const Totals t = totals(env);
      CHECK(t.inventory == doctest::Approx(0.0));
      CHECK(t.spread == doctest::Approx(0.0).epsilon(1e-9));
      CHECK(t.total == doctest::Approx(0.0).epsilon(1e-9));
      for (std::size_t j = 0; j < 3; ++j) {
        const auto& r = env.last_record().lps[j];
        CHECK(r.deltas.total == doctest::Approx(r.deltas.spread + r.deltas.inventory));
      }
    }
  }
}

TEST_CASE("flow LT reward is the negative flow-distance change") {
  EnvConfig c = small_config(1, 1, 0, 4);
  c.lt_flow_types.w = ParamDist::fixed(0.0);
  c.lt_flow_types.flow_targets = {ParamDist::fixed(0.25), ParamDist::fixed(0.75), ParamDist::fixed(0.0)};
  Env env(c);
  env.reset(1);
  env.quote({LPAction{}});
  env.trade({LtChoice::buy});
  // distance goes from (0.25 + 0.75 + 0) / 3 to (0.25 + 0.25 + 0) / 3
  CHECK(env.lt_rewards()[0] == doctest::Approx(0.5 / 3.0));
}

TEST_CASE("connectivity sampling respects probabilities") {
  std::vector<AgentType> lps(2), lts(2);
  lps[0].connect_prob_lt = 1.0;
  lps[1].connect_prob_lt = 0.0;
  for (auto& t : lts) t.family = Family::lt;
  lts[1].connect_prob_ecn = 0.0;
  Rng rng(3);
  const auto g = sample_connectivity(lps, lts, {LtGroup::flow, LtGroup::pnl}, rng);
  CHECK(g.lt_to_lp(0, 0));
  CHECK_FALSE(g.lt_to_lp(0, 1));
  // the LP-side probability only gates flow LTs
  CHECK(g.lt_to_lp(1, 1));
  CHECK(g.lt_to_ecn(0));
  CHECK_FALSE(g.lt_to_ecn(1));
}

TEST_CASE("trend value") {
  TrendConfig t{0.1, 0.0, 0.0};
  CHECK(trend_value(t, 100, 0) == doctest::Approx(0.0));
  CHECK(trend_value(t, 100, 25) == doctest::Approx(0.1));
  CHECK(trend_value(TrendConfig{}, 100, 25) == 0.0);
  CHECK(trend_value(TrendConfig{0.0, 0.0, 0.0, 0.02}, 100, 25) == doctest::Approx(0.5));
  CHECK(trend_value(TrendConfig{0.1, 0.0, 0.0, 0.02}, 100, 25) == doctest::Approx(0.6));
}

TEST_CASE("config validation") {
  EnvConfig c;
  c.episode_len = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = EnvConfig{};
  c.ecn_substeps = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
