#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mktsim/agents.hpp"
#include "mktsim/error.hpp"
#include "support.hpp"

using namespace mktsim;
using mktsim::test::Gen;

TEST_CASE("lp quote from tweaks") {
  const ReferencePrices ref{100.0, 0.01, 0.01};
  const Quote q0 = lp_quote(LPAction{}, ref);
  CHECK(q0.bid_price == doctest::Approx(99.99));
  CHECK(q0.ask_price == doctest::Approx(100.01));
  const Quote q1 = lp_quote(LPAction{1.0, 0.0, 0.0}, ref);
  CHECK(q1.ask_price - q1.bid_price == doctest::Approx(0.04));
  // eps_sym = -1 collapses both sides onto the mid
  const Quote q2 = lp_quote(LPAction{-1.0, 0.0, 0.0}, ref);
  CHECK(q2.bid_price == doctest::Approx(100.0));
  CHECK(q2.ask_price == doctest::Approx(100.0));
  // a positive skew shifts both prices up by total * eps_asym
  const Quote q3 = lp_quote(LPAction{0.0, 0.5, 0.0}, ref);
  CHECK(q3.bid_price == doctest::Approx(100.0));
  CHECK(q3.ask_price == doctest::Approx(100.02));
  CHECK(normalized_tweak(LPAction{0.4, -0.1, 0.0}) == doctest::Approx(0.1));
}

TEST_CASE("property: quote identities") {
  Gen g(17);
  for (int i = 0; i < 20000; ++i) {
    const ReferencePrices ref{g.real(1.0, 200.0), g.real(0.0, 0.5), g.real(0.0, 0.5)};
    const LPAction a{g.real(-1.0, 1.0), g.real(-1.0, 1.0), g.real(0.0, 1.0)};
    const Quote q = lp_quote(a, ref);
    const double total = ref.total_spread();
    CHECK(test::close_rel(q.ask_price - q.bid_price, total * (1.0 + a.eps_sym), 1e-9, 1e-12));
    CHECK(test::close_rel(0.5 * (q.ask_price + q.bid_price) - ref.p_mid, total * a.eps_asym, 1e-9, 1e-12));
  }
}

TEST_CASE("risk adjusted pnl and rewards") {
  const StepDeltas d{0.5, -0.2, 0.7};
  CHECK(risk_adjusted_pnl(d, 0.0) == 0.5);
  CHECK(risk_adjusted_pnl(d, 2.0) == doctest::Approx(0.1));
  AgentType lp;
  lp.w = 0.25;
  lp.alpha = 4.0;
  lp.gamma = 1.0;
  CHECK(lp_reward(lp, d, 0.3) == doctest::Approx(0.25 * 4.0 * 0.3 - 0.75 * 0.3));
  AgentType lt;
  lt.family = Family::lt;
  lt.w = 0.0;
  CHECK(lt_reward(lt, d, -0.1) == doctest::Approx(0.1));
}

TEST_CASE("flow distance and penalties telescope") {
  const std::array<double, 3> q{0.25, 0.75, 0.0};
  CHECK(flow_distance({0, 0, 0}, 0, q) == doctest::Approx(1.0 / 3.0));
  CHECK(flow_distance({1, 3, 0}, 4, q) == doctest::Approx(0.0));
  Gen g(5);
  for (int trial = 0; trial < 200; ++trial) {
    FlowTracker tr;
    const std::array<double, 3> target{g.real(0, 1), g.real(0, 1), g.real(0, 1)};
    double sum = 0.0;
    for (int t = 0; t < 50; ++t) {
      tr.record(static_cast<LtChoice>(g.integer(0, 2)));
      sum += flow_penalty(tr, target);
    }
    const double expect = flow_distance(tr.counts, tr.t, target) - flow_distance({0, 0, 0}, 0, target);
    CHECK(sum == doctest::Approx(expect).epsilon(1e-12));
    CHECK(tr.frequency(LtChoice::sell) + tr.frequency(LtChoice::buy) + tr.frequency(LtChoice::hold) ==
          doctest::Approx(1.0));
  }
}

TEST_CASE("market share penalty telescopes") {
  Gen g(6);
  for (int trial = 0; trial < 200; ++trial) {
    MarketShareTracker tr;
    const double m = g.real(0, 1);
    double sum = 0.0;
    for (int t = 0; t < 40; ++t) {
      const double total = g.integer(0, 5);
      const double own = total > 0 ? g.integer(0, static_cast<int>(total)) : 0.0;
      sum += market_share_penalty(tr, m, own, total);
    }
    CHECK(sum == doctest::Approx(std::abs(tr.share() - m) - m).epsilon(1e-12));
  }
  MarketShareTracker tr;
  CHECK_THROWS_AS(market_share_penalty(tr, 0.5, 3.0, 2.0), InvalidArgument);
}

TEST_CASE("action bounds") {
  CHECK_NOTHROW(check_bounds(LPAction{-1.0, 1.0, 1.0}));
  CHECK_THROWS_AS(check_bounds(LPAction{1.5, 0.0, 0.0}), ActionOutOfBounds);
  CHECK_THROWS_AS(check_bounds(LPAction{0.0, -1.2, 0.0}), ActionOutOfBounds);
  CHECK_THROWS_AS(check_bounds(LPAction{0.0, 0.0, 1.01}), ActionOutOfBounds);
}

TEST_CASE("agent type validation") {
  AgentType t;
  CHECK_NOTHROW(t.validate());
  t.w = 1.2;
  CHECK_THROWS_AS(t.validate(), InvalidArgument);
  AgentType lt;
  lt.family = Family::lt;
  lt.flow_targets = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(lt.validate(), InvalidArgument);
  lt.flow_targets = {0.5, 0.3, 0.2};
  CHECK_NOTHROW(lt.validate());
}

TEST_CASE("observation layouts") {
  ObservationConfig cfg;
  CHECK(lp_observation_size(cfg) == 10 + 3 + 10 + 4 + 5);
  CHECK(lt_observation_size(cfg, 3) == 10 + 4 + 6 + 2 + 6);
  const std::vector<double> hist{100.1, 100.0};
  BookSnapshot snap{100.0, {1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}};
  LpView v;
  v.mid_history = hist;
  v.episode_start_mid = 100.0;
  v.inventory = 5.0;
  v.elapsed_fraction = 0.5;
  v.market_share = 0.25;
  v.book = &snap;
  AgentType type;
  type.w = 0.3;
  type.gamma = 0.6;
  type.market_share_target = 0.4;
  const auto obs = build_lp_observation(v, type, cfg);
  REQUIRE(obs.size() == lp_observation_size(cfg));
  CHECK(obs[0] == doctest::Approx(0.1 / cfg.price_scale));
  CHECK(obs[1] == 0.0);
  CHECK(obs[2] == 0.0);  // padding
  CHECK(obs[10] == doctest::Approx(0.5));
  CHECK(obs[12] == 0.25);
  CHECK(obs[13] == doctest::Approx(0.1));
  const auto off = lp_type_offset(cfg);
  CHECK(obs[off] == 0.3);
  CHECK(obs[off + 1] == 0.6);
  CHECK(obs[off + 2] == 0.4);

  const ReferencePrices ref{100.0, 0.01, 0.01};
  std::vector<std::optional<Quote>> quotes{Quote{99.98, 100.03, 0.0}, std::nullopt};
  LtView lv;
  lv.mid_history = hist;
  lv.episode_start_mid = 100.0;
  lv.ref = ref;
  lv.lp_quotes = quotes;
  AgentType lt;
  lt.family = Family::lt;
  lt.flow_targets = {0.25, 0.75, 0.0};
  const auto lobs = build_lt_observation(lv, lt, cfg);
  REQUIRE(lobs.size() == lt_observation_size(cfg, 2));
  CHECK(lobs[14] == doctest::Approx(0.03 / cfg.price_scale));
  CHECK(lobs[15] == doctest::Approx(0.02 / cfg.price_scale));
  // disconnected venues show a sentinel cost
  CHECK(lobs[16] == doctest::Approx(10.0 * 0.02 / cfg.price_scale));
  CHECK(lobs[18] == lobs[16]);
  const auto loff = lt_type_offset(cfg, 2);
  CHECK(lobs[loff + 2] == 0.25);
  CHECK(lobs[loff + 3] == 0.75);
}

TEST_CASE("hedge cost walks the book") {
  OrderBook b(0.01);
  b.submit_limit(Side::sell, 100.01, 2, kEcnId);
  b.submit_limit(Side::sell, 100.03, 2, kEcnId);
  b.submit_limit(Side::buy, 99.99, 1, kEcnId);
  CHECK(hedge_cost(b, Side::buy, 0.0, 100.0) == 0.0);
  CHECK(hedge_cost(b, Side::buy, 3.0, 100.0) == doctest::Approx(2 * 0.01 + 0.03));
  // unfillable remainder is charged beyond the vwap
  const double vwap_dist = 0.01;
  CHECK(hedge_cost(b, Side::sell, 3.0, 100.0) == doctest::Approx(0.01 + 2 * (vwap_dist + 0.01)));
}

TEST_CASE("type distributions") {
  Rng rng(2);
  TypeDistribution d;
  d.w = ParamDist::uniform(0.2, 0.4);
  d.gamma = ParamDist::choice({0.0, 0.5});
  for (int i = 0; i < 500; ++i) {
    const AgentType t = sample_type(d, rng);
    CHECK(t.w >= 0.2);
    CHECK(t.w <= 0.4);
    CHECK((t.gamma == 0.0 || t.gamma == 0.5));
  }
  TypeDistribution lt{Family::lt};
  lt.flow_targets = {ParamDist::uniform(0, 1), ParamDist::uniform(0, 1), ParamDist::uniform(0, 1)};
  for (int i = 0; i < 200; ++i) {
    const AgentType t = sample_type(lt, rng);
    CHECK(std::accumulate(t.flow_targets.begin(), t.flow_targets.end(), 0.0) == doctest::Approx(1.0));
  }
  TypeDistribution bad;
  bad.w = ParamDist::uniform(0.5, 1.5);
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
