#include "mktsim/rl/trainer.hpp"

#include <algorithm>

#include "mktsim/csv.hpp"
#include "mktsim/error.hpp"
#include "mktsim/json_util.hpp"
#include "mktsim/rl/parallel.hpp"

namespace mktsim::rl {

using nlohmann::json;

namespace {

void allocate(FamilyBuffer& b, int agents, int steps, int obs_dim, int raw_dim) {
  b.agents = agents;
  b.steps = steps;
  const Eigen::Index n = static_cast<Eigen::Index>(agents) * steps;
  b.obs.resize(obs_dim, n);
  b.raw.resize(raw_dim, n);
  b.log_prob.resize(n);
  b.values.resize(n);
  b.rewards.setZero(n);
}

void store(FamilyBuffer& b, const Eigen::MatrixXd& obs, const ActResult& act, long t) {
  for (int a = 0; a < b.agents; ++a) {
    const Eigen::Index col = static_cast<Eigen::Index>(a) * b.steps + t;
    b.obs.col(col) = obs.col(a);
    b.raw.col(col) = act.raw.col(a);
    b.log_prob[col] = act.log_prob[a];
    b.values[col] = act.value[a];
  }
}

} // namespace

EpisodeResult run_episode(Env& env, const Policy& lp, const Policy& lt, std::uint64_t seed,
                          const EpisodeOptions& opts, const std::function<void(const Env&)>& on_step) {
  env.reset(seed);
  Rng rng(derive_seed(seed, 0x616374));
  const EnvConfig& cfg = env.config();
  const int steps = cfg.episode_len;
  const bool learn_lp = opts.record && !opts.scripted_lp;
  EpisodeResult res;
  res.lp.agents = cfg.n_lp;
  res.lp.steps = steps;
  res.lp.rewards.setZero(static_cast<Eigen::Index>(cfg.n_lp) * steps);
  res.lt.agents = cfg.n_lt();
  res.lt.steps = steps;
  res.lt.rewards.setZero(static_cast<Eigen::Index>(cfg.n_lt()) * steps);
  if (learn_lp) allocate(res.lp, cfg.n_lp, steps, lp.obs_dim(), 3);
  if (opts.record) allocate(res.lt, cfg.n_lt(), steps, lt.obs_dim(), 1);

  std::vector<LPAction> lp_actions(static_cast<std::size_t>(cfg.n_lp));
  std::vector<LtChoice> lt_choices(static_cast<std::size_t>(cfg.n_lt()));
  while (!env.done()) {
    const long t = env.t();
    if (opts.scripted_lp) {
      std::fill(lp_actions.begin(), lp_actions.end(), *opts.scripted_lp);
    } else if (cfg.n_lp > 0) {
      const Eigen::MatrixXd obs = env.lp_observations();
      const ActResult act = lp.act(obs, rng, opts.deterministic_lp);
      for (int j = 0; j < cfg.n_lp; ++j) lp_actions[j] = lp.lp_action(act.raw.col(j));
      if (learn_lp) store(res.lp, obs, act, t);
    }
    env.quote(lp_actions);
    if (cfg.n_lt() > 0) {
      const Eigen::MatrixXd obs = env.lt_observations();
      const ActResult act = lt.act(obs, rng, opts.deterministic_lt);
      for (int i = 0; i < cfg.n_lt(); ++i) lt_choices[i] = Policy::lt_choice(act.raw(0, i));
      if (opts.record) store(res.lt, obs, act, t);
    }
    env.trade(lt_choices);
    const StepRecord& rec = env.last_record();
    for (int j = 0; j < cfg.n_lp; ++j) res.lp.rewards[static_cast<Eigen::Index>(j) * steps + t] = rec.lps[j].reward;
    for (int i = 0; i < cfg.n_lt(); ++i) res.lt.rewards[static_cast<Eigen::Index>(i) * steps + t] = rec.lts[i].reward;
    if (on_step) on_step(env);
  }
  return res;
}

Batch make_batch(const std::vector<const FamilyBuffer*>& buffers, const TrainerConfig& cfg) {
  Eigen::Index total = 0;
  for (const auto* b : buffers) total += b->obs.cols();
  Batch batch;
  if (buffers.empty() || total == 0) return batch;
  batch.obs.resize(buffers.front()->obs.rows(), total);
  batch.raw.resize(buffers.front()->raw.rows(), total);
  batch.log_prob.resize(total);
  batch.advantages.resize(total);
  batch.returns.resize(total);
  Eigen::Index at = 0;
  for (const auto* b : buffers) {
    const Eigen::Index n = b->obs.cols();
    if (n == 0) continue;
    batch.obs.middleCols(at, n) = b->obs;
    batch.raw.middleCols(at, n) = b->raw;
    batch.log_prob.segment(at, n) = b->log_prob;
    for (int a = 0; a < b->agents; ++a) {
      const Eigen::Index off = static_cast<Eigen::Index>(a) * b->steps;
      std::vector<double> r(b->rewards.data() + off, b->rewards.data() + off + b->steps);
      std::vector<double> v(b->values.data() + off, b->values.data() + off + b->steps);
      std::vector<std::uint8_t> d(static_cast<std::size_t>(b->steps), 0);
      if (!d.empty()) d.back() = 1;
      const GaeResult g = gae(r, v, d, cfg.discount, cfg.gae_lambda);
      for (int t = 0; t < b->steps; ++t) {
        batch.advantages[at + off + t] = g.advantages[t];
        batch.returns[at + off + t] = g.returns[t];
      }
    }
    at += n;
  }
  return batch;
}

std::uint64_t episode_seed(std::uint64_t seed, long iteration, long episode) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(iteration)), static_cast<std::uint64_t>(episode));
}

TrainState init_training(const TrainOptions& opts) {
  opts.env.validate();
  opts.lp.validate();
  opts.lt.validate();
  if (opts.iterations < 0) throw InvalidArgument("iterations must be non-negative");
  const Env probe(opts.env);
  TrainState s;
  s.lp = Policy(Family::lp, static_cast<int>(probe.lp_obs_size()), opts.lp.hidden, opts.env.bounds, opts.lp.init_log_std);
  s.lt = Policy(Family::lt, static_cast<int>(probe.lt_obs_size()), opts.lt.hidden, opts.env.bounds, opts.lt.init_log_std);
  Rng init_rng(derive_seed(opts.seed, 0x696e6974));
  s.lp.init(init_rng, opts.lp.init_hedge);
  s.lt.init(init_rng);
  s.lp_opt = make_ppo_state(s.lp, opts.lp);
  s.lt_opt = make_ppo_state(s.lt, opts.lt);
  s.rng = Rng(derive_seed(opts.seed, 0x70706f));
  return s;
}

void train(TrainState& state, const TrainOptions& opts, const std::function<void(const CurveRow&)>& on_iteration) {
  const int episodes = std::max(opts.lp.episodes_per_update, opts.lt.episodes_per_update);
  const int steps = opts.env.episode_len;
  while (state.iteration < opts.iterations) {
    const long it = state.iteration;
    std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));
    EpisodeOptions eo;
    eo.scripted_lp = opts.scripted_lp;
    parallel_for(results.size(), opts.jobs, [&](std::size_t e) {
      Env env(opts.env);
      results[e] = run_episode(env, state.lp, state.lt, episode_seed(opts.seed, it, static_cast<long>(e)), eo);
    });

    bool train_lp = !opts.scripted_lp && !opts.freeze_lp && opts.env.n_lp > 0;
    bool train_lt = !opts.freeze_lt && opts.env.n_lt() > 0;
    if (opts.alternate_every > 0) {
      const bool lp_turn = (it / opts.alternate_every) % 2 == 0;
      train_lp = train_lp && lp_turn;
      train_lt = train_lt && !lp_turn;
    }

    CurveRow row;
    row.iteration = it + 1;
    row.env_steps = (it + 1) * static_cast<long>(episodes) * steps;
    double lp_sum = 0.0, lt_sum = 0.0;
    std::vector<const FamilyBuffer*> lp_bufs, lt_bufs;
    for (const auto& r : results) {
      lp_sum += r.lp.reward_sum();
      lt_sum += r.lt.reward_sum();
      lp_bufs.push_back(&r.lp);
      lt_bufs.push_back(&r.lt);
    }
    if (opts.env.n_lp > 0) row.lp_mean_return = lp_sum / (static_cast<double>(opts.env.n_lp) * episodes);
    if (opts.env.n_lt() > 0) row.lt_mean_return = lt_sum / (static_cast<double>(opts.env.n_lt()) * episodes);

    if (train_lp) row.lp_stats = ppo_update(state.lp, state.lp_opt, make_batch(lp_bufs, opts.lp), opts.lp, state.rng);
    if (train_lt) row.lt_stats = ppo_update(state.lt, state.lt_opt, make_batch(lt_bufs, opts.lt), opts.lt, state.rng);
    if (row.lp_stats.aborted) throw NumericalError("LP update aborted: " + row.lp_stats.diagnostics);
    if (row.lt_stats.aborted) throw NumericalError("LT update aborted: " + row.lt_stats.diagnostics);

    state.iteration = it + 1;
    state.curve.push_back(row);
    if (on_iteration) on_iteration(row);
  }
}

TrainState train(const TrainOptions& opts) {
  TrainState s = init_training(opts);
  train(s, opts);
  return s;
}

std::string curve_csv(const std::vector<CurveRow>& curve) {
  std::string out =
      "iteration,env_steps,lp_mean_return,lt_mean_return,lp_policy_loss,lp_value_loss,lp_entropy,lp_clip_fraction,"
      "lt_policy_loss,lt_value_loss,lt_entropy,lt_clip_fraction\n";
  for (const auto& r : curve) {
    out += csv::join({csv::number(static_cast<long long>(r.iteration)), csv::number(static_cast<long long>(r.env_steps)),
                      csv::number(r.lp_mean_return), csv::number(r.lt_mean_return),
                      csv::number(r.lp_stats.policy_loss), csv::number(r.lp_stats.value_loss),
                      csv::number(r.lp_stats.entropy), csv::number(r.lp_stats.clip_fraction),
                      csv::number(r.lt_stats.policy_loss), csv::number(r.lt_stats.value_loss),
                      csv::number(r.lt_stats.entropy), csv::number(r.lt_stats.clip_fraction)});
    out += '\n';
  }
  return out;
}

json trainer_config_json(const TrainerConfig& c) {
  return json{{"discount", c.discount},         {"gae_lambda", c.gae_lambda},
              {"clip", c.clip},                 {"epochs", c.epochs},
              {"minibatch", c.minibatch},       {"learning_rate", c.learning_rate},
              {"entropy_coef", c.entropy_coef}, {"value_coef", c.value_coef},
              {"max_grad_norm", c.max_grad_norm}, {"episodes_per_update", c.episodes_per_update},
              {"optimizer", c.optimizer},       {"hidden", c.hidden},
              {"init_log_std", c.init_log_std}, {"init_hedge", c.init_hedge}};
}

TrainerConfig trainer_config_from_json(const json& j) {
  using json_util::read;
  constexpr std::string_view where = "trainer";
  json_util::reject_unknown(j,
                            {"discount", "gae_lambda", "clip", "epochs", "minibatch", "learning_rate", "entropy_coef",
                             "value_coef", "max_grad_norm", "episodes_per_update", "optimizer", "hidden",
                             "init_log_std", "init_hedge"},
                            where);
  TrainerConfig c;
  read(j, "discount", c.discount, where);
  read(j, "gae_lambda", c.gae_lambda, where);
  read(j, "clip", c.clip, where);
  read(j, "epochs", c.epochs, where);
  read(j, "minibatch", c.minibatch, where);
  read(j, "learning_rate", c.learning_rate, where);
  read(j, "entropy_coef", c.entropy_coef, where);
  read(j, "value_coef", c.value_coef, where);
  read(j, "max_grad_norm", c.max_grad_norm, where);
  read(j, "episodes_per_update", c.episodes_per_update, where);
  read(j, "optimizer", c.optimizer, where);
  read(j, "hidden", c.hidden, where);
  read(j, "init_log_std", c.init_log_std, where);
  read(j, "init_hedge", c.init_hedge, where);
  c.validate();
  return c;
}

namespace {
json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
} // namespace

std::string checkpoint_json(const Policy& policy, const TrainerConfig& cfg, const PpoState& opt, const Rng& rng,
                            long iteration) {
  json j;
  j["family"] = std::string(to_string(policy.family()));
  j["layer_sizes"] = policy.actor().layer_sizes();
  j["weights"] = vec_json(policy.actor().params());
  j["log_std"] = policy.family() == Family::lp ? vec_json(policy.log_std()) : json(nullptr);
  j["value_layer_sizes"] = policy.critic().layer_sizes();
  j["value_weights"] = vec_json(policy.critic().params());
  if (policy.family() == Family::lp) j["action_bounds"] = {{"lo", vec_json(policy.lo())}, {"hi", vec_json(policy.hi())}};
  j["trainer_config"] = trainer_config_json(cfg);
  j["optimizer"] = {{"kind", opt.policy_opt.kind()},
                    {"policy_steps", opt.policy_opt.steps()},
                    {"value_steps", opt.value_opt.steps()},
                    {"policy_m", vec_json(opt.policy_opt.m())},
                    {"policy_v", vec_json(opt.policy_opt.v())},
                    {"value_m", vec_json(opt.value_opt.m())},
                    {"value_v", vec_json(opt.value_opt.v())}};
  j["rng_state"] = rng.serialize();
  j["iteration"] = iteration;
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Checkpoint c;
    const std::string fam = j.at("family").get<std::string>();
    if (fam != "LP" && fam != "LT") throw SchemaError("unknown family '" + fam + "'");
    const Family family = fam == "LP" ? Family::lp : Family::lt;
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto vsizes = j.at("value_layer_sizes").get<std::vector<int>>();
    if (sizes.size() < 3 || vsizes.size() != sizes.size() || vsizes.front() != sizes.front() || vsizes.back() != 1)
      throw SchemaError("inconsistent layer sizes");
    const std::vector<int> hidden(sizes.begin() + 1, sizes.end() - 1);
    if (!std::equal(hidden.begin(), hidden.end(), vsizes.begin() + 1)) throw SchemaError("actor and critic differ");
    if (sizes.back() != (family == Family::lp ? 3 : kLtActionCount)) throw SchemaError("wrong action dimension");
    ActionBounds bounds;
    if (family == Family::lp) {
      const Eigen::VectorXd lo = vec_from(j.at("action_bounds").at("lo"));
      const Eigen::VectorXd hi = vec_from(j.at("action_bounds").at("hi"));
      if (lo.size() != 3 || hi.size() != 3) throw SchemaError("action bounds must have three entries");
      bounds = ActionBounds{lo[0], hi[0], hi[1]};
    }
    c.policy = Policy(family, sizes.front(), hidden, bounds);
    c.policy.actor().set_params(vec_from(j.at("weights")));
    c.policy.critic().set_params(vec_from(j.at("value_weights")));
    if (family == Family::lp) {
      const Eigen::VectorXd ls = vec_from(j.at("log_std"));
      if (ls.size() != 3) throw SchemaError("log_std must have three entries");
      c.policy.log_std() = ls;
    }
    c.config = trainer_config_from_json(j.at("trainer_config"));
    c.opt = make_ppo_state(c.policy, c.config);
    const json& o = j.at("optimizer");
    if (o.at("kind").get<std::string>() != c.config.optimizer) throw SchemaError("optimizer kind mismatch");
    c.opt.policy_opt.restore(o.at("policy_steps").get<long>(), vec_from(o.at("policy_m")), vec_from(o.at("policy_v")));
    c.opt.value_opt.restore(o.at("value_steps").get<long>(), vec_from(o.at("value_m")), vec_from(o.at("value_v")));
    c.rng.deserialize(j.at("rng_state").get<std::string>());
    c.iteration = j.at("iteration").get<long>();
    return c;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeMismatch& e) {
    throw SchemaError(std::string("checkpoint shape: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Policy& policy, const TrainerConfig& cfg,
                     const PpoState& opt, const Rng& rng, long iteration) {
  csv::write_file(path, checkpoint_json(policy, cfg, opt, rng, iteration));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(csv::read_file(path)); }

} // namespace mktsim::rl
