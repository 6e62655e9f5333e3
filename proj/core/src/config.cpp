#include "mktsim/config.hpp"

#include <algorithm>

#include "mktsim/csv.hpp"
#include "mktsim/error.hpp"
#include "mktsim/json_util.hpp"
#include "mktsim/rl/trainer.hpp"

namespace mktsim {

using nlohmann::json;
using json_util::read;
using json_util::reject_unknown;

std::string_view to_string(LogLevel l) noexcept {
  switch (l) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    case LogLevel::debug: return "debug";
  }
  return "?";
}

namespace {

LogLevel parse_log_level(const std::string& s) {
  for (auto l : {LogLevel::error, LogLevel::warn, LogLevel::info, LogLevel::debug})
    if (s == to_string(l)) return l;
  throw ConfigError("log_level must be one of error, warn, info, debug (got '" + s + "')");
}

const json& object_at(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_object()) throw ConfigError("'" + where + "." + key + "' must be an object");
  return v;
}

// Runs fn, turning library validation errors into ConfigError with a location.
template <class Fn> void checked(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json lp_action_json(const LPAction& a) {
  return json{{"eps_sym", a.eps_sym}, {"eps_asym", a.eps_asym}, {"hedge_fraction", a.hedge_fraction}};
}

LPAction lp_action_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"eps_sym", "eps_asym", "hedge_fraction"}, where);
  LPAction a;
  read(j, "eps_sym", a.eps_sym, where);
  read(j, "eps_asym", a.eps_asym, where);
  read(j, "hedge_fraction", a.hedge_fraction, where);
  return a;
}

rl::TrainerConfig trainer_from(const json& j, const std::string& where) {
  try {
    return rl::trainer_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json synth_json(const SynthConfig& s) {
  return json{{"rows", s.rows},
              {"levels", s.levels},
              {"tick_size", s.tick_size},
              {"initial_mid", s.initial_mid},
              {"mid_reversion", s.mid_reversion},
              {"mid_volatility", s.mid_volatility},
              {"base_volume", s.base_volume},
              {"volume_slope", s.volume_slope},
              {"volume_noise", s.volume_noise},
              {"volume_persistence", s.volume_persistence}};
}

SynthConfig synth_from_json(const json& j, const std::string& where) {
  reject_unknown(j,
                 {"rows", "levels", "tick_size", "initial_mid", "mid_reversion", "mid_volatility", "base_volume",
                  "volume_slope", "volume_noise", "volume_persistence"},
                 where);
  SynthConfig s;
  read(j, "rows", s.rows, where);
  read(j, "levels", s.levels, where);
  read(j, "tick_size", s.tick_size, where);
  read(j, "initial_mid", s.initial_mid, where);
  read(j, "mid_reversion", s.mid_reversion, where);
  read(j, "mid_volatility", s.mid_volatility, where);
  read(j, "base_volume", s.base_volume, where);
  read(j, "volume_slope", s.volume_slope, where);
  read(j, "volume_noise", s.volume_noise, where);
  read(j, "volume_persistence", s.volume_persistence, where);
  return s;
}

json calibration_json(const CalibrationOptions& o) {
  return json{{"init_components", o.init_components},
              {"delta_components", o.delta_components},
              {"decomp_components", o.decomp_components},
              {"dt", o.dt},
              {"tick_size", o.tick_size},
              {"symmetrize", o.symmetrize},
              {"max_iterations", o.fit.max_iterations},
              {"tolerance", o.fit.tolerance},
              {"jitter", o.fit.jitter}};
}

CalibrationOptions calibration_from_json(const json& j, const std::string& where) {
  reject_unknown(j,
                 {"init_components", "delta_components", "decomp_components", "dt", "tick_size", "symmetrize",
                  "max_iterations", "tolerance", "jitter"},
                 where);
  CalibrationOptions o;
  read(j, "init_components", o.init_components, where);
  read(j, "delta_components", o.delta_components, where);
  read(j, "decomp_components", o.decomp_components, where);
  read(j, "dt", o.dt, where);
  read(j, "tick_size", o.tick_size, where);
  read(j, "symmetrize", o.symmetrize, where);
  read(j, "max_iterations", o.fit.max_iterations, where);
  read(j, "tolerance", o.fit.tolerance, where);
  read(j, "jitter", o.fit.jitter, where);
  return o;
}

} // namespace

json param_dist_json(const ParamDist& d) {
  switch (d.kind) {
    case ParamDist::Kind::fixed: return d.value;
    case ParamDist::Kind::uniform: return json{{"uniform", {d.lo, d.hi}}};
    case ParamDist::Kind::choice: return json{{"choice", d.choices}};
  }
  return nullptr;
}

ParamDist param_dist_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return ParamDist::fixed(j.get<double>());
  if (!j.is_object() || j.size() != 1)
    throw ConfigError("'" + where + "' must be a number, {\"uniform\": [lo, hi]} or {\"choice\": [...]}");
  try {
    if (j.contains("uniform")) {
      const auto v = j.at("uniform").get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("'" + where + ".uniform' needs exactly two bounds");
      return ParamDist::uniform(v[0], v[1]);
    }
    if (j.contains("choice")) return ParamDist::choice(j.at("choice").get<std::vector<double>>());
  } catch (const json::exception&) {
    throw ConfigError("wrong type for '" + where + "'");
  }
  throw ConfigError("unknown key '" + where + "." + j.begin().key() + "'");
}

json type_distribution_json(const TypeDistribution& d) {
  json j{{"w", param_dist_json(d.w)},
         {"alpha", param_dist_json(d.alpha)},
         {"gamma", param_dist_json(d.gamma)},
         {"connect_prob_lt", param_dist_json(d.connect_prob_lt)},
         {"connect_prob_lp", param_dist_json(d.connect_prob_lp)},
         {"connect_prob_ecn", param_dist_json(d.connect_prob_ecn)}};
  if (d.family == Family::lp) {
    j["market_share_target"] = param_dist_json(d.market_share_target);
  } else {
    json q = json::array();
    for (const auto& p : d.flow_targets) q.push_back(param_dist_json(p));
    j["flow_targets"] = q;
  }
  return j;
}

TypeDistribution type_distribution_from_json(const json& j, Family family, const std::string& where) {
  if (family == Family::lp)
    reject_unknown(j, {"w", "alpha", "gamma", "market_share_target", "connect_prob_lt", "connect_prob_lp",
                       "connect_prob_ecn"},
                   where);
  else
    reject_unknown(j, {"w", "alpha", "gamma", "flow_targets", "connect_prob_lt", "connect_prob_lp",
                       "connect_prob_ecn"},
                   where);
  TypeDistribution d;
  d.family = family;
  auto field = [&](const char* key, ParamDist& out) {
    if (j.contains(key)) out = param_dist_from_json(j.at(key), where + "." + key);
  };
  field("w", d.w);
  field("alpha", d.alpha);
  field("gamma", d.gamma);
  field("market_share_target", d.market_share_target);
  field("connect_prob_lt", d.connect_prob_lt);
  field("connect_prob_lp", d.connect_prob_lp);
  field("connect_prob_ecn", d.connect_prob_ecn);
  if (j.contains("flow_targets")) {
    const json& q = j.at("flow_targets");
    if (!q.is_array() || q.size() != static_cast<std::size_t>(kLtActionCount))
      throw ConfigError("'" + where + ".flow_targets' must list (sell, buy, hold)");
    for (int k = 0; k < kLtActionCount; ++k)
      d.flow_targets[static_cast<std::size_t>(k)] =
          param_dist_from_json(q[static_cast<std::size_t>(k)], where + ".flow_targets[" + std::to_string(k) + "]");
  }
  checked(where, [&] { d.validate(); });
  return d;
}

json env_config_json(const EnvConfig& c) {
  return json{{"n_lp", c.n_lp},
              {"n_lt_flow", c.n_lt_flow},
              {"n_lt_pnl", c.n_lt_pnl},
              {"episode_len", c.episode_len},
              {"evolve_ecn", c.evolve_ecn},
              {"ecn_substeps", c.ecn_substeps},
              {"lp_types", type_distribution_json(c.lp_types)},
              {"lt_flow_types", type_distribution_json(c.lt_flow_types)},
              {"lt_pnl_types", type_distribution_json(c.lt_pnl_types)},
              {"observation",
               {{"history", c.obs.history},
                {"levels", c.obs.levels},
                {"price_scale", c.obs.price_scale},
                {"inventory_scale", c.obs.inventory_scale},
                {"volume_scale", c.obs.volume_scale}}},
              {"bounds",
               {{"eps_sym_min", c.bounds.eps_sym_min},
                {"eps_sym_max", c.bounds.eps_sym_max},
                {"eps_asym_max", c.bounds.eps_asym_max}}},
              {"trend", {{"amplitude", c.trend.amplitude}, {"period", c.trend.period}, {"phase", c.trend.phase}, {"drift", c.trend.drift}}}};
}

EnvConfig env_config_from_json(const json& j) {
  const std::string where = "env";
  reject_unknown(j,
                 {"n_lp", "n_lt_flow", "n_lt_pnl", "episode_len", "evolve_ecn", "ecn_substeps", "lp_types",
                  "lt_flow_types", "lt_pnl_types", "observation", "bounds", "trend"},
                 where);
  EnvConfig c;
  read(j, "n_lp", c.n_lp, where);
  read(j, "n_lt_flow", c.n_lt_flow, where);
  read(j, "n_lt_pnl", c.n_lt_pnl, where);
  read(j, "episode_len", c.episode_len, where);
  read(j, "evolve_ecn", c.evolve_ecn, where);
  read(j, "ecn_substeps", c.ecn_substeps, where);
  if (j.contains("lp_types")) c.lp_types = type_distribution_from_json(j.at("lp_types"), Family::lp, "env.lp_types");
  if (j.contains("lt_flow_types"))
    c.lt_flow_types = type_distribution_from_json(j.at("lt_flow_types"), Family::lt, "env.lt_flow_types");
  if (j.contains("lt_pnl_types"))
    c.lt_pnl_types = type_distribution_from_json(j.at("lt_pnl_types"), Family::lt, "env.lt_pnl_types");
  if (j.contains("observation")) {
    const json& o = object_at(j, "observation", where);
    const std::string w = "env.observation";
    reject_unknown(o, {"history", "levels", "price_scale", "inventory_scale", "volume_scale"}, w);
    read(o, "history", c.obs.history, w);
    read(o, "levels", c.obs.levels, w);
    read(o, "price_scale", c.obs.price_scale, w);
    read(o, "inventory_scale", c.obs.inventory_scale, w);
    read(o, "volume_scale", c.obs.volume_scale, w);
  }
  if (j.contains("bounds")) {
    const json& b = object_at(j, "bounds", where);
    const std::string w = "env.bounds";
    reject_unknown(b, {"eps_sym_min", "eps_sym_max", "eps_asym_max"}, w);
    read(b, "eps_sym_min", c.bounds.eps_sym_min, w);
    read(b, "eps_sym_max", c.bounds.eps_sym_max, w);
    read(b, "eps_asym_max", c.bounds.eps_asym_max, w);
  }
  if (j.contains("trend")) {
    const json& t = object_at(j, "trend", where);
    const std::string w = "env.trend";
    reject_unknown(t, {"amplitude", "period", "phase", "drift"}, w);
    read(t, "amplitude", c.trend.amplitude, w);
    read(t, "period", c.trend.period, w);
    read(t, "phase", c.trend.phase, w);
    read(t, "drift", c.trend.drift, w);
  }
  checked(where, [&] { c.validate(); });
  return c;
}

void RunConfig::validate() const {
  checked("env", [&] { env.validate(); });
  checked("trainer.lp", [&] { lp_trainer.validate(); });
  checked("trainer.lt", [&] { lt_trainer.validate(); });
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (train.iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (train.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (train.alternate_every < 0) throw ConfigError("train.alternate_every must be >= 0");
  if (train.scripted_lp) checked("train.scripted_lp", [&] { check_bounds(*train.scripted_lp, env.bounds); });
  if (evaluate.episodes < 1) throw ConfigError("evaluate.episodes must be >= 1");
  if (calibrate.synth.rows < 2 || calibrate.synth.levels < 1)
    throw ConfigError("calibrate.synth needs at least two rows and one level");
  if (experiment.iterations && *experiment.iterations < 0) throw ConfigError("experiment.iterations must be >= 0");
  if (experiment.eval_episodes && *experiment.eval_episodes < 1)
    throw ConfigError("experiment.eval_episodes must be >= 1");
  if (experiment.seeds && experiment.seeds->empty()) throw ConfigError("experiment.seeds must not be empty");
  if (experiment.episode_len && *experiment.episode_len < 1) throw ConfigError("experiment.episode_len must be >= 1");
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), experiment.preset) == names.end()) make_preset(experiment.preset);
}

json run_config_json(const RunConfig& c) {
  json train{{"iterations", c.train.iterations},
             {"freeze_lp", c.train.freeze_lp},
             {"freeze_lt", c.train.freeze_lt},
             {"alternate_every", c.train.alternate_every},
             {"checkpoint_every", c.train.checkpoint_every},
             {"scripted_lp", c.train.scripted_lp ? lp_action_json(*c.train.scripted_lp) : json(nullptr)}};
  json exp{{"preset", c.experiment.preset}};
  auto opt = [&](const char* key, const auto& v) {
    if (v) exp[key] = *v;
    else exp[key] = nullptr;
  };
  opt("iterations", c.experiment.iterations);
  opt("eval_episodes", c.experiment.eval_episodes);
  opt("seeds", c.experiment.seeds);
  opt("episode_len", c.experiment.episode_len);
  opt("keys", c.experiment.keys);
  exp["lp_trainer"] = c.experiment.lp_trainer ? rl::trainer_config_json(*c.experiment.lp_trainer) : json(nullptr);
  exp["lt_trainer"] = c.experiment.lt_trainer ? rl::trainer_config_json(*c.experiment.lt_trainer) : json(nullptr);
  return json{{"seed", c.seed},
              {"log_level", to_string(c.log_level)},
              {"jobs", c.jobs},
              {"paths",
               {{"out", c.paths.out.string()},
                {"model", c.paths.model.string()},
                {"data", c.paths.data.string()},
                {"checkpoints", c.paths.checkpoints.string()}}},
              {"calibrate", {{"synth", synth_json(c.calibrate.synth)}, {"options", calibration_json(c.calibrate.options)}}},
              {"env", env_config_json(c.env)},
              {"trainer", {{"lp", rl::trainer_config_json(c.lp_trainer)}, {"lt", rl::trainer_config_json(c.lt_trainer)}}},
              {"train", train},
              {"evaluate",
               {{"episodes", c.evaluate.episodes},
                {"deterministic_lp", c.evaluate.deterministic_lp},
                {"deterministic_lt", c.evaluate.deterministic_lt}}},
              {"experiment", exp}};
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"seed", "log_level", "jobs", "paths", "calibrate", "env", "trainer", "train", "evaluate",
                     "experiment"},
                 "config");
  RunConfig c;
  read(j, "seed", c.seed, "config");
  read(j, "jobs", c.jobs, "config");
  if (j.contains("log_level")) {
    std::string s;
    read(j, "log_level", s, "config");
    c.log_level = parse_log_level(s);
  }
  if (j.contains("paths")) {
    const json& p = object_at(j, "paths", "config");
    reject_unknown(p, {"out", "model", "data", "checkpoints"}, "paths");
    std::string s;
    if (p.contains("out")) read(p, "out", s, "paths"), c.paths.out = s;
    if (p.contains("model")) read(p, "model", s, "paths"), c.paths.model = s;
    if (p.contains("data")) read(p, "data", s, "paths"), c.paths.data = s;
    if (p.contains("checkpoints")) read(p, "checkpoints", s, "paths"), c.paths.checkpoints = s;
  }
  if (j.contains("calibrate")) {
    const json& cal = object_at(j, "calibrate", "config");
    reject_unknown(cal, {"synth", "options"}, "calibrate");
    if (cal.contains("synth")) c.calibrate.synth = synth_from_json(cal.at("synth"), "calibrate.synth");
    if (cal.contains("options")) c.calibrate.options = calibration_from_json(cal.at("options"), "calibrate.options");
  }
  if (j.contains("env")) c.env = env_config_from_json(j.at("env"));
  if (j.contains("trainer")) {
    const json& t = object_at(j, "trainer", "config");
    reject_unknown(t, {"lp", "lt"}, "trainer");
    if (t.contains("lp")) c.lp_trainer = trainer_from(t.at("lp"), "trainer.lp");
    if (t.contains("lt")) c.lt_trainer = trainer_from(t.at("lt"), "trainer.lt");
  }
  if (j.contains("train")) {
    const json& t = object_at(j, "train", "config");
    const std::string w = "train";
    reject_unknown(t, {"iterations", "freeze_lp", "freeze_lt", "alternate_every", "checkpoint_every", "scripted_lp"},
                   w);
    read(t, "iterations", c.train.iterations, w);
    read(t, "freeze_lp", c.train.freeze_lp, w);
    read(t, "freeze_lt", c.train.freeze_lt, w);
    read(t, "alternate_every", c.train.alternate_every, w);
    read(t, "checkpoint_every", c.train.checkpoint_every, w);
    if (t.contains("scripted_lp") && !t.at("scripted_lp").is_null())
      c.train.scripted_lp = lp_action_from_json(t.at("scripted_lp"), "train.scripted_lp");
  }
  if (j.contains("evaluate")) {
    const json& e = object_at(j, "evaluate", "config");
    const std::string w = "evaluate";
    reject_unknown(e, {"episodes", "deterministic_lp", "deterministic_lt"}, w);
    read(e, "episodes", c.evaluate.episodes, w);
    read(e, "deterministic_lp", c.evaluate.deterministic_lp, w);
    read(e, "deterministic_lt", c.evaluate.deterministic_lt, w);
  }
  if (j.contains("experiment")) {
    const json& e = object_at(j, "experiment", "config");
    const std::string w = "experiment";
    reject_unknown(e, {"preset", "iterations", "eval_episodes", "seeds", "episode_len", "keys", "lp_trainer",
                       "lt_trainer"},
                   w);
    read(e, "preset", c.experiment.preset, w);
    auto opt = [&](const char* key, auto& out) {
      if (!e.contains(key) || e.at(key).is_null()) return;
      typename std::decay_t<decltype(out)>::value_type v{};
      read(e, key, v, w);
      out = std::move(v);
    };
    opt("iterations", c.experiment.iterations);
    opt("eval_episodes", c.experiment.eval_episodes);
    opt("seeds", c.experiment.seeds);
    opt("episode_len", c.experiment.episode_len);
    opt("keys", c.experiment.keys);
    if (e.contains("lp_trainer") && !e.at("lp_trainer").is_null())
      c.experiment.lp_trainer = trainer_from(e.at("lp_trainer"), "experiment.lp_trainer");
    if (e.contains("lt_trainer") && !e.at("lt_trainer").is_null())
      c.experiment.lt_trainer = trainer_from(e.at("lt_trainer"), "experiment.lt_trainer");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(csv::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

ExperimentSpec resolve_experiment(const RunConfig& c) {
  ExperimentSpec s = make_preset(c.experiment.preset);
  const ExperimentConfig& e = c.experiment;
  if (e.keys) {
    std::vector<SweepPoint> kept;
    for (const auto& k : *e.keys) {
      const auto it = std::find_if(s.sweep.begin(), s.sweep.end(), [&](const SweepPoint& p) { return p.key == k; });
      if (it == s.sweep.end()) throw ConfigError("preset '" + s.name + "' has no sweep key '" + k + "'");
      kept.push_back(*it);
    }
    s.sweep = std::move(kept);
  }
  if (e.iterations) s.iterations = *e.iterations;
  if (e.eval_episodes) s.eval_episodes = *e.eval_episodes;
  if (e.seeds) s.seeds = *e.seeds;
  if (e.episode_len)
    for (auto& p : s.sweep) p.train_env.episode_len = p.eval_env.episode_len = *e.episode_len;
  if (e.lp_trainer) s.lp_trainer = *e.lp_trainer;
  if (e.lt_trainer) s.lt_trainer = *e.lt_trainer;
  s.jobs = c.jobs;
  s.out_dir = c.paths.out;
  checked("experiment", [&] { s.validate(); });
  return s;
}

json experiment_plan_json(const ExperimentSpec& spec) {
  json points = json::array();
  for (const auto& p : spec.sweep)
    points.push_back(json{{"key", p.key}, {"train_env", env_config_json(p.train_env)},
                          {"eval_env", env_config_json(p.eval_env)}});
  return json{{"name", spec.name},
              {"iterations", spec.iterations},
              {"eval_episodes", spec.eval_episodes},
              {"seeds", spec.seeds},
              {"lp_trainer", rl::trainer_config_json(spec.lp_trainer)},
              {"lt_trainer", rl::trainer_config_json(spec.lt_trainer)},
              {"scripted_lp", spec.scripted_lp ? lp_action_json(*spec.scripted_lp) : json(nullptr)},
              {"deterministic_lp_eval", spec.deterministic_lp_eval},
              {"deterministic_lt_eval", spec.deterministic_lt_eval},
              {"sweep", points}};
}

} // namespace mktsim
