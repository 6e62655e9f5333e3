#include <doctest.h>

#include <nlohmann/json.hpp>

#include "mktsim/config.hpp"
#include "mktsim/error.hpp"

using namespace mktsim;
using nlohmann::json;

TEST_CASE("defaults round-trip through json") {
  const RunConfig c;
  const json j = run_config_json(c);
  const RunConfig back = run_config_from_json(j);
  CHECK(run_config_json(back) == j);
  CHECK(back.env == c.env);
  CHECK(back.lp_trainer == c.lp_trainer);
}

TEST_CASE("a customized config round-trips") {
  const json in = json::parse(R"({
    "seed": 42, "log_level": "debug", "jobs": 2,
    "paths": {"out": "runs/x"},
    "env": {"n_lp": 2, "n_lt_flow": 4, "n_lt_pnl": 1, "episode_len": 32, "ecn_substeps": 4,
            "lp_types": {"w": {"uniform": [0.2, 1]}, "gamma": {"choice": [0, 0.5]}, "market_share_target": 0.3},
            "lt_flow_types": {"flow_targets": [0.25, 0.75, 0]},
            "trend": {"amplitude": 0.1}},
    "trainer": {"lp": {"optimizer": "adam", "learning_rate": 0.001}},
    "train": {"iterations": 7, "scripted_lp": {"eps_sym": 0, "eps_asym": 0, "hedge_fraction": 0}},
    "experiment": {"preset": "risk-aversion", "seeds": [1, 2, 3], "episode_len": 16}
  })");
  const RunConfig c = run_config_from_json(in);
  CHECK(c.seed == 42);
  CHECK(c.log_level == LogLevel::debug);
  CHECK(c.env.ecn_substeps == 4);
  CHECK(c.env.lp_types.w == ParamDist::uniform(0.2, 1.0));
  CHECK(c.env.lp_types.gamma == ParamDist::choice({0.0, 0.5}));
  CHECK(c.env.lt_flow_types.flow_targets[1] == ParamDist::fixed(0.75));
  CHECK(c.lp_trainer.optimizer == "adam");
  CHECK(c.lt_trainer.optimizer == "sgd");
  CHECK(c.train.scripted_lp.has_value());
  CHECK(run_config_json(run_config_from_json(run_config_json(c))) == run_config_json(c));
}

TEST_CASE("unknown keys are rejected with their location") {
  const char* cases[][2] = {
      {R"({"sed": 1})", "config.sed"},
      {R"({"env": {"n_lps": 1}})", "env.n_lps"},
      {R"({"env": {"lp_types": {"flow_targets": [1, 0, 0]}}})", "env.lp_types.flow_targets"},
      {R"({"env": {"trend": {"amp": 1}}})", "env.trend.amp"},
      {R"({"trainer": {"lp": {"lr": 0.1}}})", "lr"},
      {R"({"train": {"iters": 3}})", "train.iters"},
      {R"({"experiment": {"name": "x"}})", "experiment.name"},
      {R"({"calibrate": {"synth": {"row": 3}}})", "calibrate.synth.row"},
  };
  for (const auto& [text, where] : cases) {
    CAPTURE(text);
    try {
      run_config_from_json(json::parse(text));
      FAIL("accepted");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(where) != std::string::npos);
    }
  }
}

TEST_CASE("wrong types and invalid values are config errors") {
  for (const char* text : {R"({"seed": "one"})", R"({"env": {"n_lp": 1.5}})", R"({"env": {"episode_len": 0}})",
                           R"({"log_level": "loud"})", R"({"env": {"lp_types": {"w": {"uniform": [0.5]}}}})",
                           R"({"env": {"lp_types": {"w": 2}}})", R"({"experiment": {"preset": "nope"}})",
                           R"({"trainer": {"lt": {"optimizer": "rmsprop"}}})", R"({"paths": 3})",
                           R"({"evaluate": {"episodes": 0}})"}) {
    const std::string shown = text;
    CAPTURE(shown);
    CHECK_THROWS_AS(run_config_from_json(json::parse(text)), ConfigError);
  }
}

TEST_CASE("missing config file") { CHECK_THROWS_AS(load_run_config("/nonexistent/cfg.json"), IoError); }

TEST_CASE("experiment overrides") {
  RunConfig c;
  c.experiment.preset = "risk-aversion";
  c.experiment.keys = std::vector<std::string>{"gamma=0", "gamma=0.9"};
  c.experiment.episode_len = 12;
  c.experiment.seeds = std::vector<std::uint64_t>{4, 5, 6};
  c.experiment.iterations = 3;
  c.jobs = 2;
  const ExperimentSpec s = resolve_experiment(c);
  REQUIRE(s.sweep.size() == 2);
  CHECK(s.sweep[0].key == "gamma=0");
  CHECK(s.sweep[1].eval_env.episode_len == 12);
  CHECK(s.sweep[1].train_env.episode_len == 12);
  CHECK(s.seeds.size() == 3);
  CHECK(s.iterations == 3);
  CHECK(s.jobs == 2);
  const json plan = experiment_plan_json(s);
  CHECK(plan["sweep"].size() == 2);
  CHECK(plan["name"] == "risk-aversion");
  c.experiment.keys = std::vector<std::string>{"gamma=7"};
  CHECK_THROWS_AS(resolve_experiment(c), ConfigError);
}

TEST_CASE("param dist json forms") {
  CHECK(param_dist_json(ParamDist::fixed(0.5)) == json(0.5));
  CHECK(param_dist_from_json(json::parse(R"({"uniform": [0, 1]})"), "x") == ParamDist::uniform(0, 1));
  CHECK_THROWS_AS(param_dist_from_json(json::parse(R"({"normal": [0, 1]})"), "x"), ConfigError);
  CHECK_THROWS_AS(param_dist_from_json(json::parse(R"("0.5")"), "x"), ConfigError);
}
