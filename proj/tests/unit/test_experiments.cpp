#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mktsim/csv.hpp"
#include "mktsim/error.hpp"
#include "mktsim/experiments.hpp"
#include "support.hpp"

using namespace mktsim;
namespace fs = std::filesystem;

namespace {

MetricRow lp_row(int point, std::uint64_t seed, int step, double sym, double asym, double inventory) {
  MetricRow r;
  r.point = point;
  r.seed = seed;
  r.step = step;
  r.group = RowGroup::lp;
  r.type.family = Family::lp;
  r.eps_sym = sym;
  r.eps_asym = asym;
  r.eps = 0.5 * sym + asym;
  r.inventory = inventory;
  r.volume = 1.0;
  return r;
}

MetricTable sample_table() {
  MetricTable t;
  t.experiment = "unit";
  t.sweep_keys = {"a", "b"};
  t.rows.push_back(lp_row(0, 1, 0, 0.2, 0.1, 1.0));
  t.rows.push_back(lp_row(0, 1, 1, -0.4, -0.3, 2.0));
  t.rows.push_back(lp_row(1, 2, 0, 0.0, 0.05, -1.0));
  MetricRow lt;
  lt.point = 1;
  lt.seed = 2;
  lt.agent = 3;
  lt.group = RowGroup::pnl;
  lt.type.family = Family::lt;
  lt.type.flow_targets = {0.2, 0.8, 0.0};
  lt.choice = LtChoice::buy;
  lt.counterparty = 0;
  lt.reward = -0.125;
  lt.d_spread_pnl = -0.01;
  lt.volume = 1.0;
  t.rows.push_back(lt);
  return t;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mktsim_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

} // namespace

TEST_CASE("rows csv round trip") {
  const MetricTable t = sample_table();
  const std::string text = rows_csv(t);
  CHECK(text.substr(0, text.find(',')) == metric_columns().front());
  const MetricTable back = parse_rows_csv(text);
  CHECK(back == t);
  CHECK(rows_csv(back) == text);
}

TEST_CASE("malformed rows csv") {
  CHECK_THROWS_AS(parse_rows_csv("nope\n1\n"), SchemaError);
  std::string text = rows_csv(sample_table());
  text += "unit,a,1\n";
  CHECK_THROWS_AS(parse_rows_csv(text), SchemaError);
}

TEST_CASE("skew intensity and tweak distribution") {
  const MetricTable t = sample_table();
  const auto s = skew_intensity(t);
  CHECK(s.at("a").mean_abs_asym == doctest::Approx(0.2));
  CHECK(s.at("a").mean_abs_asym_with_inventory == doctest::Approx(0.3));
  CHECK(s.at("a").samples == 2);
  CHECK(s.at("b").mean_abs_asym == doctest::Approx(0.05));
  const auto d = tweak_distribution(t, 10);
  CHECK(d.at("a").eps.total() == 2);
  CHECK(d.at("b").eps_asym.total() == 1);
  MetricTable empty;
  CHECK_THROWS_AS(skew_intensity(empty), InvalidArgument);
}

TEST_CASE("pnl decomposition and seed filter") {
  const MetricTable t = sample_table();
  const auto p = pnl_decomposition(t);
  REQUIRE(p.at("b").at(RowGroup::pnl).size() == 1);
  CHECK(p.at("b").at(RowGroup::pnl)[0].spread == doctest::Approx(-0.01));
  const MetricTable only2 = filter_seed(t, 2);
  CHECK(only2.rows.size() == 2);
  const auto j = summarize(t, 10, 0.1);
  REQUIRE(j["points"].size() == 2);
  CHECK(j["points"][0]["key"] == "a");
  CHECK(j["points"][1]["per_seed"].contains("2"));
}

TEST_CASE("presets") {
  for (const auto& name : preset_names()) {
    const ExperimentSpec s = make_preset(name);
    CHECK(s.name == name);
    CHECK_NOTHROW(s.validate());
    CHECK_FALSE(s.sweep.empty());
  }
  CHECK_THROWS_AS(make_preset("bogus"), ConfigError);
  try {
    make_preset("bogus");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("diversity") != std::string::npos);
  }
}

TEST_CASE("experiment outputs are byte-identical across runs and worker counts") {
  ExperimentSpec s = make_preset("diversity");
  s.sweep.resize(2);
  for (auto& p : s.sweep) {
    p.train_env.episode_len = p.eval_env.episode_len = 8;
    p.train_env.n_lt_flow = p.eval_env.n_lt_flow = 3;
  }
  s.iterations = 2;
  s.eval_episodes = 2;
  s.seeds = {1, 2};
  s.lp_trainer.episodes_per_update = 2;
  s.lt_trainer.episodes_per_update = 2;
  const fs::path dir_a = scratch_dir("det_a");
  s.out_dir = dir_a;
  s.jobs = 1;
  const auto a = run_experiment(s);
  s.out_dir = scratch_dir("det_b");
  s.jobs = 2;
  const auto b = run_experiment(s);
  CHECK(csv::read_file(dir_a / "rows.csv") ==
        csv::read_file(s.out_dir / "rows.csv"));
  CHECK(csv::read_file(dir_a / "summary.json") ==
        csv::read_file(s.out_dir / "summary.json"));
  CHECK(a.table == b.table);
  CHECK(read_rows_csv(s.out_dir / "rows.csv") == b.table);
  // one curve per training env and seed
  CHECK(a.curves.size() == 4);
  CHECK(fs::exists(s.out_dir / "curves"));
  CHECK(fs::exists(s.out_dir / "checkpoints"));
}

TEST_CASE("sweep points sharing a training env share one training run") {
  ExperimentSpec s = make_preset("connectivity");
  for (auto& p : s.sweep) {
    p.train_env.episode_len = p.eval_env.episode_len = 6;
    p.train_env.n_lt_flow = p.eval_env.n_lt_flow = 2;
  }
  s.iterations = 1;
  s.eval_episodes = 1;
  s.seeds = {3};
  s.lp_trainer.episodes_per_update = 1;
  s.lt_trainer.episodes_per_update = 1;
  const auto r = run_experiment(s);
  CHECK(r.curves.size() == 1);
  CHECK(r.table.sweep_keys.size() == s.sweep.size());
}
