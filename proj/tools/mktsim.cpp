#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mktsim/config.hpp"
#include "mktsim/csv.hpp"
#include "mktsim/ecn_model.hpp"
#include "mktsim/error.hpp"
#include "mktsim/experiments.hpp"
#include "mktsim/rl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
  bool dry_run = false;
};

mktsim::LogLevel g_level = mktsim::LogLevel::info;

} // namespace

namespace mktsim::cli {
namespace {

void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(g_level)) return;
  std::cerr << "[" << to_string(level) << "] " << msg << "\n";
}

RunConfig load(const CommonOptions& o) {
  RunConfig c;
  bool jobs_in_file = false;
  if (!o.config.empty()) {
    c = load_run_config(o.config);
    jobs_in_file = json::parse(csv::read_file(o.config)).contains("jobs");
  }
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.jobs = *o.jobs;
  else if (!jobs_in_file) c.jobs = std::max(1u, std::thread::hardware_concurrency());
  if (!o.out.empty()) c.paths.out = o.out;
  c.validate();
  g_level = c.log_level;
  return c;
}

void write_effective(const RunConfig& c) {
  fs::create_directories(c.paths.out);
  csv::write_file(c.paths.out / "effective-config.json", run_config_json(c).dump(2) + "\n");
}

std::shared_ptr<const EcnDynamics> ecn_from(const RunConfig& c) {
  if (c.paths.model.empty()) return nullptr;
  return std::make_shared<EcnDynamics>(load_model(c.paths.model));
}

json diagnostics_json(const MixtureDiagnostics& d) {
  return json{{"initial_log_likelihood", d.initial_log_likelihood},
              {"final_log_likelihood", d.final_log_likelihood},
              {"iterations", d.iterations},
              {"converged", d.converged}};
}

int cmd_calibrate(const CommonOptions& o) {
  RunConfig c = load(o);
  if (o.dry_run) {
    std::cout << run_config_json(c).dump(2) << "\n";
    return 0;
  }
  write_effective(c);
  std::vector<SnapshotRow> rows;
  if (!c.paths.data.empty()) {
    if (!fs::exists(c.paths.data)) throw IoError("data file not found: " + c.paths.data.string());
    rows = read_snapshot_csv(c.paths.data);
    log(LogLevel::info, "read " + std::to_string(rows.size()) + " snapshots from " + c.paths.data.string());
  } else {
    Rng rng(derive_seed(c.seed, 0x73796e));
    rows = synth_l2_dataset(c.calibrate.synth, rng);
    write_snapshot_csv(rows, c.calibrate.synth.levels, c.paths.out / "data.csv");
    log(LogLevel::info, "synthesized " + std::to_string(rows.size()) + " snapshots");
  }
  const CalibrationResult res = calibrate(rows, c.calibrate.options, c.seed);
  const fs::path model = c.paths.model.empty() ? c.paths.out / "model.json" : c.paths.model;
  if (model.has_parent_path()) fs::create_directories(model.parent_path());
  save_model(res.model, model);
  const json diag{{"init", diagnostics_json(res.init)},
                  {"delta", diagnostics_json(res.delta)},
                  {"decomp", diagnostics_json(res.decomp)},
                  {"rows", rows.size()}};
  csv::write_file(c.paths.out / "diagnostics.json", diag.dump(2) + "\n");
  for (const auto& [name, d] : {std::pair{"init", res.init}, {"delta", res.delta}, {"decomp", res.decomp}}) {
    std::printf("%-6s log-likelihood %.6g -> %.6g (+%.6g) in %d iterations%s\n", name, d.initial_log_likelihood,
                d.final_log_likelihood, d.final_log_likelihood - d.initial_log_likelihood, d.iterations,
                d.converged ? "" : " (not converged)");
  }
  std::printf("model written to %s\n", model.string().c_str());
  return 0;
}

rl::TrainOptions train_options(const RunConfig& c) {
  rl::TrainOptions t;
  t.env = c.env;
  t.env.ecn = ecn_from(c);
  t.lp = c.lp_trainer;
  t.lt = c.lt_trainer;
  t.iterations = c.train.iterations;
  t.seed = c.seed;
  t.jobs = c.jobs;
  t.scripted_lp = c.train.scripted_lp;
  t.freeze_lp = c.train.freeze_lp;
  t.freeze_lt = c.train.freeze_lt;
  t.alternate_every = c.train.alternate_every;
  return t;
}

void check_dims(const rl::Policy& p, std::size_t expected, const char* family) {
  if (static_cast<std::size_t>(p.obs_dim()) != expected)
    throw SchemaError(std::string(family) + " checkpoint expects " + std::to_string(p.obs_dim()) +
                      " observation inputs but the env produces " + std::to_string(expected));
}

void save_state(const fs::path& dir, const rl::TrainState& s, const rl::TrainOptions& t) {
  fs::create_directories(dir);
  rl::save_checkpoint(dir / "lp.json", s.lp, t.lp, s.lp_opt, s.rng, s.iteration);
  rl::save_checkpoint(dir / "lt.json", s.lt, t.lt, s.lt_opt, s.rng, s.iteration);
}

int cmd_train(const CommonOptions& o) {
  RunConfig c = load(o);
  if (o.dry_run) {
    std::cout << run_config_json(c).dump(2) << "\n";
    return 0;
  }
  write_effective(c);
  const rl::TrainOptions t = train_options(c);
  rl::TrainState s = rl::init_training(t);
  const fs::path ckpt_dir = c.paths.out / "checkpoints";
  const fs::path curve_path = c.paths.out / "curve.csv";
  std::string prior_curve;
  if (!c.paths.checkpoints.empty()) {
    auto lp = rl::load_checkpoint(c.paths.checkpoints / "lp.json");
    auto lt = rl::load_checkpoint(c.paths.checkpoints / "lt.json");
    const Env probe(t.env);
    check_dims(lp.policy, probe.lp_obs_size(), "LP");
    check_dims(lt.policy, probe.lt_obs_size(), "LT");
    if (lp.iteration != lt.iteration) throw SchemaError("LP and LT checkpoints are from different iterations");
    s.lp = std::move(lp.policy);
    s.lt = std::move(lt.policy);
    s.lp_opt = std::move(lp.opt);
    s.lt_opt = std::move(lt.opt);
    s.rng = lp.rng;
    s.iteration = lp.iteration;
    // keep the curve rows written before the checkpoint
    const fs::path old_curve = c.paths.checkpoints.parent_path() / "curve.csv";
    if (fs::exists(old_curve)) {
      const auto lines = csv::read_lines(old_curve);
      for (std::size_t i = 1; i < lines.size() && static_cast<long>(i) <= s.iteration; ++i)
        prior_curve += lines[i] + "\n";
    }
    log(LogLevel::info, "resuming at iteration " + std::to_string(s.iteration));
  }
  const auto start = std::chrono::steady_clock::now();
  auto write_curve = [&] {
    std::string text = rl::curve_csv(s.curve);
    const auto eol = text.find('\n');
    text.insert(eol + 1, prior_curve);
    csv::write_file(curve_path, text);
  };
  rl::train(s, t, [&](const rl::CurveRow& row) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log(LogLevel::info, "iteration " + std::to_string(row.iteration) + "/" + std::to_string(t.iterations) +
                            " lp_return " + csv::number(row.lp_mean_return) + " lt_return " +
                            csv::number(row.lt_mean_return) + " (" + csv::number(secs) + "s)");
    if (c.train.checkpoint_every > 0 && row.iteration % c.train.checkpoint_every == 0) {
      save_state(ckpt_dir, s, t);
      write_curve();
    }
  });
  save_state(ckpt_dir, s, t);
  write_curve();
  std::printf("trained %ld iterations; checkpoints in %s\n", s.iteration, ckpt_dir.string().c_str());
  return 0;
}

int cmd_evaluate(const CommonOptions& o) {
  RunConfig c = load(o);
  if (c.paths.checkpoints.empty()) throw ConfigError("evaluate needs paths.checkpoints (a directory with lp.json and lt.json)");
  if (o.dry_run) {
    std::cout << run_config_json(c).dump(2) << "\n";
    return 0;
  }
  write_effective(c);
  EnvConfig env = c.env;
  env.ecn = ecn_from(c);
  const auto lp = rl::load_checkpoint(c.paths.checkpoints / "lp.json");
  const auto lt = rl::load_checkpoint(c.paths.checkpoints / "lt.json");
  const Env probe(env);
  check_dims(lp.policy, probe.lp_obs_size(), "LP");
  check_dims(lt.policy, probe.lt_obs_size(), "LT");
  if (lp.policy.family() != Family::lp || lt.policy.family() != Family::lt)
    throw SchemaError("lp.json and lt.json must hold an LP and an LT policy");
  MetricTable table;
  table.experiment = "evaluate";
  table.sweep_keys = {"eval"};
  rl::EpisodeOptions mode;
  mode.deterministic_lp = c.evaluate.deterministic_lp;
  mode.deterministic_lt = c.evaluate.deterministic_lt;
  mode.record = false;
  mode.scripted_lp = c.train.scripted_lp;
  evaluate_policies(table, 0, env, lp.policy, lt.policy, c.seed, c.evaluate.episodes, mode, c.jobs);
  export_csv(table, c.paths.out / "rows.csv");
  const json summary = summarize(table, 30, 0.1);
  csv::write_file(c.paths.out / "summary.json", summary.dump(1) + "\n");
  std::printf("evaluated %d episodes; %zu rows written to %s\n", c.evaluate.episodes, table.rows.size(),
              (c.paths.out / "rows.csv").string().c_str());
  return 0;
}

int cmd_experiment(const CommonOptions& o, const std::string& preset) {
  RunConfig c = load(o);
  if (!preset.empty()) {
    c.experiment.preset = preset;
    c.validate();
  }
  ExperimentSpec spec = resolve_experiment(c);
  if (!c.paths.model.empty()) {
    const auto ecn = ecn_from(c);
    for (auto& p : spec.sweep) p.train_env.ecn = p.eval_env.ecn = ecn;
  }
  if (o.dry_run) {
    std::cout << experiment_plan_json(spec).dump(2) << "\n";
    return 0;
  }
  write_effective(c);
  const auto res = run_experiment(spec, [](const std::string& m) { log(LogLevel::info, m); });
  std::printf("experiment %s: %zu sweep points, %zu seeds, %zu rows written to %s\n", spec.name.c_str(),
              spec.sweep.size(), spec.seeds.size(), res.table.rows.size(), spec.out_dir.string().c_str());
  return 0;
}

} // namespace
} // namespace mktsim::cli

int main(int argc, char** argv) {
  using namespace mktsim::cli;
  CLI::App app{"Dealer-market simulator: ECN calibration, multi-agent training and experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mktsim 0.1.0");

  CommonOptions opts;
  std::string preset;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opts.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "Master seed");
    sub->add_option("-j,--jobs", opts.jobs, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
    sub->add_option("-o,--out", opts.out, "Output directory");
    sub->add_flag("--dry-run", opts.dry_run, "Print the resolved configuration and exit");
  };
  auto* calibrate = app.add_subcommand("calibrate", "Fit the ECN model to L2 snapshots");
  auto* train = app.add_subcommand("train", "Train LP and LT policies");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate frozen policies and export metrics");
  auto* experiment = app.add_subcommand("experiment", "Run a preset experiment");
  for (auto* s : {calibrate, train, evaluate, experiment}) add_common(s);
  experiment->add_option("preset", preset, "Preset name (overrides experiment.preset)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "mktsim: error: UsageError: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*calibrate) return cmd_calibrate(opts);
    if (*train) return cmd_train(opts);
    if (*evaluate) return cmd_evaluate(opts);
    return cmd_experiment(opts, preset);
  } catch (const mktsim::Error& e) {
    std::cerr << "mktsim: error: " << e.what() << "\n";
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "mktsim: error: IoError: " << e.what() << "\n";
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "mktsim: error: ConfigError: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "mktsim: error: InternalError: " << e.what() << "\n";
  }
  return 1;
}
