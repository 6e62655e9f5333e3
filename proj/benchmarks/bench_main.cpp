#include <benchmark/benchmark.h>

#include "mktsim/env.hpp"
#include "mktsim/order_book.hpp"
#include "mktsim/rl/mlp.hpp"

using namespace mktsim;

static void order_book_churn(benchmark::State& state) {
  Rng rng(1);
  OrderBook book(1.0);
  for (auto _ : state) {
    const Side side = rng.bernoulli(0.5) ? Side::buy : Side::sell;
    const auto u = rng.below(10);
    if (u < 6) {
      const Ticks px = 1000 + static_cast<Ticks>(rng.below(21)) - 10;
      benchmark::DoNotOptimize(book.submit_limit_ticks(side, px, 1.0 + static_cast<double>(rng.below(5)), 1));
    } else if (u < 8) {
      benchmark::DoNotOptimize(book.submit_market(side, 3.0, 2));
    } else if (side == Side::buy ? book.has_bids() : book.has_asks()) {
      const Ticks px = side == Side::buy ? book.best_bid_ticks() : book.best_ask_ticks();
      book.cancel(book.queue_at(side, px)->front().id);
    }
  }
}
BENCHMARK(order_book_churn);

static void mlp_forward_backward(benchmark::State& state) {
  Rng rng(2);
  rl::Mlp net({32, 64, 64, 4});
  net.init(rng);
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(32, batch);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(4, batch);
  rl::Mlp::Cache cache;
  for (auto _ : state) {
    net.forward(x, cache);
    benchmark::DoNotOptimize(net.backward(cache, g));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(mlp_forward_backward)->Arg(1)->Arg(64)->Arg(512);

static void env_step(benchmark::State& state) {
  EnvConfig c;
  c.n_lp = 3;
  c.n_lt_flow = 12;
  c.n_lt_pnl = 12;
  c.episode_len = 1 << 30;
  Env env(c);
  env.reset(3);
  const std::vector<LPAction> quotes(3);
  std::vector<LtChoice> choices(24);
  Rng rng(4);
  for (auto _ : state) {
    for (auto& ch : choices) ch = static_cast<LtChoice>(rng.below(3));
    env.quote(quotes);
    benchmark::DoNotOptimize(env.trade(choices));
  }
}
BENCHMARK(env_step);
BENCHMARK_MAIN();
