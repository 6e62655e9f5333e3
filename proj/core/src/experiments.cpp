#include "mktsim/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "mktsim/csv.hpp"
#include "mktsim/error.hpp"
#include "mktsim/rl/parallel.hpp"

namespace mktsim {

using nlohmann::json;

void ExperimentSpec::validate() const {
  if (name.empty()) throw InvalidArgument("experiment needs a name");
  if (sweep.empty()) throw InvalidArgument("experiment needs at least one sweep point");
  if (seeds.empty()) throw InvalidArgument("experiment needs at least one seed");
  if (iterations < 0) throw InvalidArgument("iterations must be non-negative");
  if (eval_episodes < 1) throw InvalidArgument("eval_episodes must be >= 1");
  if (tweak_bins < 1 || !(flow_bucket_width > 0.0)) throw InvalidArgument("invalid histogram settings");
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    if (sweep[i].key.empty() || sweep[i].key.find(',') != std::string::npos)
      throw InvalidArgument("sweep keys must be non-empty and contain no commas");
    for (std::size_t j = 0; j < i; ++j)
      if (sweep[j].key == sweep[i].key) throw InvalidArgument("duplicate sweep key " + sweep[i].key);
    sweep[i].train_env.validate();
    sweep[i].eval_env.validate();
    if (sweep[i].train_env.n_lp != sweep[i].eval_env.n_lp)
      throw InvalidArgument("train and eval envs of " + sweep[i].key + " differ in LP count");
  }
  lp_trainer.validate();
  lt_trainer.validate();
}

std::string_view to_string(RowGroup g) noexcept {
  switch (g) {
  case RowGroup::lp: return "lp";
  case RowGroup::flow: return "flow";
  case RowGroup::pnl: return "pnl";
  }
  return "?";
}

const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{
      "experiment", "sweep_key", "seed", "episode", "step", "agent_id", "family", "group",
      "w", "alpha", "gamma", "market_share_target", "q_sell", "q_buy", "q_hold",
      "connect_prob_lt", "connect_prob_lp", "connect_prob_ecn",
      "eps_sym", "eps_asym", "eps", "hedge", "lt_choice",
      "reward", "d_spread_pnl", "d_inventory_pnl", "inventory", "counterparty", "volume"};
  return cols;
}

std::string rows_csv(const MetricTable& table) {
  std::string out = csv::join(metric_columns()) + "\n";
  using csv::number;
  for (const MetricRow& r : table.rows) {
    const bool lp = r.group == RowGroup::lp;
    std::string cp;
    if (r.counterparty) cp = *r.counterparty == kEcnId ? "ecn" : number(static_cast<long long>(*r.counterparty));
    out += csv::join({table.experiment, table.sweep_keys.at(static_cast<std::size_t>(r.point)),
                      std::to_string(r.seed), number(static_cast<long long>(r.episode)),
                      number(static_cast<long long>(r.step)), number(static_cast<long long>(r.agent)),
                      std::string(to_string(r.family())), std::string(to_string(r.group)), number(r.type.w),
                      number(r.type.alpha), number(r.type.gamma), number(r.type.market_share_target),
                      number(r.type.flow_targets[0]), number(r.type.flow_targets[1]), number(r.type.flow_targets[2]),
                      number(r.type.connect_prob_lt), number(r.type.connect_prob_lp), number(r.type.connect_prob_ecn),
                      lp ? number(r.eps_sym) : "", lp ? number(r.eps_asym) : "", lp ? number(r.eps) : "",
                      lp ? number(r.hedge) : "", r.choice ? std::string(to_string(*r.choice)) : "",
                      number(r.reward), number(r.d_spread_pnl), number(r.d_inventory_pnl), number(r.inventory), cp,
                      number(r.volume)});
    out += '\n';
  }
  return out;
}

void export_csv(const MetricTable& table, const std::filesystem::path& path) { csv::write_file(path, rows_csv(table)); }

MetricTable parse_rows_csv(const std::string& text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    lines.push_back(std::string_view(text).substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) throw SchemaError("rows file is empty");
  const auto header = csv::split(lines.front());
  const auto& cols = metric_columns();
  if (header.size() != cols.size() || !std::equal(header.begin(), header.end(), cols.begin()))
    throw SchemaError("rows header does not match the metric schema");

  MetricTable table;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto f = csv::split(lines[li]);
    if (f.size() != cols.size()) throw SchemaError("row " + std::to_string(li) + " has the wrong field count");
    if (li == 1) table.experiment = std::string(f[0]);
    else if (f[0] != table.experiment) throw SchemaError("mixed experiment names in rows file");
    MetricRow r;
    const std::string key(f[1]);
    const auto it = std::find(table.sweep_keys.begin(), table.sweep_keys.end(), key);
    r.point = static_cast<int>(it - table.sweep_keys.begin());
    if (it == table.sweep_keys.end()) table.sweep_keys.push_back(key);
    r.seed = static_cast<std::uint64_t>(std::stoull(std::string(f[2])));
    r.episode = static_cast<int>(csv::parse_int(f[3]));
    r.step = static_cast<int>(csv::parse_int(f[4]));
    r.agent = static_cast<AgentId>(csv::parse_int(f[5]));
    if (f[7] == "lp") r.group = RowGroup::lp;
    else if (f[7] == "flow") r.group = RowGroup::flow;
    else if (f[7] == "pnl") r.group = RowGroup::pnl;
    else throw SchemaError("unknown group '" + std::string(f[7]) + "'");
    if (f[6] != to_string(r.family())) throw SchemaError("family does not match group");
    r.type.family = r.family();
    r.type.w = csv::parse_double(f[8]);
    r.type.alpha = csv::parse_double(f[9]);
    r.type.gamma = csv::parse_double(f[10]);
    r.type.market_share_target = csv::parse_double(f[11]);
    for (int j = 0; j < kLtActionCount; ++j) r.type.flow_targets[j] = csv::parse_double(f[12 + j]);
    r.type.connect_prob_lt = csv::parse_double(f[15]);
    r.type.connect_prob_lp = csv::parse_double(f[16]);
    r.type.connect_prob_ecn = csv::parse_double(f[17]);
    if (r.group == RowGroup::lp) {
      r.eps_sym = csv::parse_double(f[18]);
      r.eps_asym = csv::parse_double(f[19]);
      r.eps = csv::parse_double(f[20]);
      r.hedge = csv::parse_double(f[21]);
    }
    if (!f[22].empty()) {
      if (f[22] == "sell") r.choice = LtChoice::sell;
      else if (f[22] == "buy") r.choice = LtChoice::buy;
      else if (f[22] == "hold") r.choice = LtChoice::hold;
      else throw SchemaError("unknown LT choice '" + std::string(f[22]) + "'");
    }
    r.reward = csv::parse_double(f[23]);
    r.d_spread_pnl = csv::parse_double(f[24]);
    r.d_inventory_pnl = csv::parse_double(f[25]);
    r.inventory = csv::parse_double(f[26]);
    if (f[27] == "ecn") r.counterparty = kEcnId;
    else if (!f[27].empty()) r.counterparty = static_cast<AgentId>(csv::parse_int(f[27]));
    r.volume = csv::parse_double(f[28]);
    table.rows.push_back(r);
  }
  return table;
}

MetricTable read_rows_csv(const std::filesystem::path& path) { return parse_rows_csv(csv::read_file(path)); }

void append_step_rows(MetricTable& table, int point, std::uint64_t seed, int episode, const Env& env) {
  const StepRecord& rec = env.last_record();
  for (std::size_t j = 0; j < rec.lps.size(); ++j) {
    const LpStepRecord& s = rec.lps[j];
    MetricRow r;
    r.point = point;
    r.seed = seed;
    r.episode = episode;
    r.step = static_cast<int>(rec.t);
    r.agent = static_cast<AgentId>(j);
    r.group = RowGroup::lp;
    r.type = env.lps()[j].type;
    r.eps_sym = s.action.eps_sym;
    r.eps_asym = s.action.eps_asym;
    r.eps = normalized_tweak(s.action);
    r.hedge = s.action.hedge_fraction;
    r.reward = s.reward;
    r.d_spread_pnl = s.deltas.spread;
    r.d_inventory_pnl = s.deltas.inventory;
    r.inventory = s.inventory;
    r.volume = s.lt_volume;
    table.rows.push_back(r);
  }
  const int n_lp = static_cast<int>(rec.lps.size());
  for (std::size_t i = 0; i < rec.lts.size(); ++i) {
    const LtStepRecord& s = rec.lts[i];
    MetricRow r;
    r.point = point;
    r.seed = seed;
    r.episode = episode;
    r.step = static_cast<int>(rec.t);
    r.agent = static_cast<AgentId>(n_lp + static_cast<int>(i));
    r.group = env.lt_groups()[i] == LtGroup::flow ? RowGroup::flow : RowGroup::pnl;
    r.type = env.lts()[i].type;
    r.choice = s.choice;
    r.reward = s.reward;
    r.d_spread_pnl = s.deltas.spread;
    r.d_inventory_pnl = s.deltas.inventory;
    r.inventory = s.inventory;
    r.counterparty = s.counterparty;
    r.volume = s.counterparty ? 1.0 : 0.0;
    table.rows.push_back(r);
  }
}

long Histogram::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

namespace {

Histogram make_hist(double lo, double hi, int bins) { return Histogram{lo, hi, std::vector<long>(static_cast<std::size_t>(bins), 0)}; }

void add(Histogram& h, double v) {
  const auto n = static_cast<long>(h.counts.size());
  long i = static_cast<long>(std::floor((v - h.lo) / h.bin_width()));
  i = std::clamp(i, 0L, n - 1);
  ++h.counts[static_cast<std::size_t>(i)];
}

bool has_lp_rows(const MetricTable& t) {
  return std::any_of(t.rows.begin(), t.rows.end(), [](const MetricRow& r) { return r.group == RowGroup::lp; });
}

using StepKey = std::tuple<int, std::uint64_t, int, int, AgentId>;  // point, seed, episode, step, agent

} // namespace

std::map<std::string, TweakDistribution> tweak_distribution(const MetricTable& table, int bins) {
  if (bins < 1) throw InvalidArgument("bins must be >= 1");
  if (!has_lp_rows(table)) throw InvalidArgument("tweak_distribution: no LP rows");
  std::map<std::string, TweakDistribution> out;
  for (const MetricRow& r : table.rows) {
    if (r.group != RowGroup::lp) continue;
    const std::string& key = table.sweep_keys.at(static_cast<std::size_t>(r.point));
    auto it = out.find(key);
    if (it == out.end())
      it = out.emplace(key, TweakDistribution{make_hist(-1.5, 1.5, bins), make_hist(-1.0, 1.0, bins),
                                              make_hist(-1.0, 1.0, bins)})
               .first;
    add(it->second.eps, r.eps);
    add(it->second.eps_sym, r.eps_sym);
    add(it->second.eps_asym, r.eps_asym);
  }
  return out;
}

std::map<std::string, std::vector<FlowBucket>> flow_by_tweak(const MetricTable& table, double width) {
  if (!(width > 0.0)) throw InvalidArgument("bucket width must be positive");
  constexpr double lo = -1.5, hi = 1.5;
  const int n = static_cast<int>(std::ceil((hi - lo) / width - 1e-9));
  auto bucket_of = [&](double eps) {
    return std::clamp(static_cast<int>(std::floor((eps - lo) / width)), 0, n - 1);
  };
  std::map<std::string, std::vector<FlowBucket>> out;
  std::map<StepKey, int> lp_bucket;
  for (const MetricRow& r : table.rows) {
    if (r.group != RowGroup::lp) continue;
    auto& buckets = out[table.sweep_keys.at(static_cast<std::size_t>(r.point))];
    if (buckets.empty())
      for (int b = 0; b < n; ++b) buckets.push_back(FlowBucket{lo + b * width, std::min(hi, lo + (b + 1) * width)});
    const int b = bucket_of(r.eps);
    ++buckets[static_cast<std::size_t>(b)].lp_steps;
    lp_bucket[{r.point, r.seed, r.episode, r.step, r.agent}] = b;
  }
  for (const MetricRow& r : table.rows) {
    if (r.group == RowGroup::lp || !r.counterparty || *r.counterparty == kEcnId) continue;
    const auto it = lp_bucket.find({r.point, r.seed, r.episode, r.step, *r.counterparty});
    if (it == lp_bucket.end()) throw SchemaError("LT row trades with an LP that has no row at that step");
    FlowBucket& b = out[table.sweep_keys.at(static_cast<std::size_t>(r.point))][static_cast<std::size_t>(it->second)];
    (r.group == RowGroup::flow ? b.flow_volume : b.pnl_volume) += r.volume;
  }
  return out;
}

std::map<std::string, std::map<RowGroup, std::vector<PnlSample>>> pnl_decomposition(const MetricTable& table) {
  std::map<std::tuple<int, RowGroup, std::uint64_t, int, AgentId>, PnlSample> acc;
  for (const MetricRow& r : table.rows) {
    PnlSample& s = acc[{r.point, r.group, r.seed, r.episode, r.agent}];
    s.seed = r.seed;
    s.episode = r.episode;
    s.agent = r.agent;
    s.spread += r.d_spread_pnl;
    s.inventory += r.d_inventory_pnl;
  }
  std::map<std::string, std::map<RowGroup, std::vector<PnlSample>>> out;
  for (const auto& [k, s] : acc)
    out[table.sweep_keys.at(static_cast<std::size_t>(std::get<0>(k)))][std::get<1>(k)].push_back(s);
  return out;
}

std::map<std::string, SkewIntensity> skew_intensity(const MetricTable& table) {
  if (!has_lp_rows(table)) throw InvalidArgument("skew_intensity: no LP rows");
  struct Acc {
    double sum = 0.0, sum_inv = 0.0;
    long n = 0, n_inv = 0;
  };
  std::map<int, Acc> acc;
  std::map<std::tuple<int, std::uint64_t, int, AgentId>, std::pair<int, double>> last;  // step, inventory after
  for (const MetricRow& r : table.rows) {
    if (r.group != RowGroup::lp) continue;
    const auto key = std::make_tuple(r.point, r.seed, r.episode, r.agent);
    double before = 0.0;
    if (const auto it = last.find(key); it != last.end() && it->second.first == r.step - 1) before = it->second.second;
    last[key] = {r.step, r.inventory};
    Acc& a = acc[r.point];
    a.sum += std::abs(r.eps_asym);
    ++a.n;
    if (before != 0.0) {
      a.sum_inv += std::abs(r.eps_asym);
      ++a.n_inv;
    }
  }
  std::map<std::string, SkewIntensity> out;
  for (const auto& [p, a] : acc)
    out[table.sweep_keys.at(static_cast<std::size_t>(p))] =
        SkewIntensity{a.sum / static_cast<double>(a.n),
                      a.n_inv ? a.sum_inv / static_cast<double>(a.n_inv) : std::numeric_limits<double>::quiet_NaN(),
                      a.n};
  return out;
}

MetricTable filter_seed(const MetricTable& table, std::uint64_t seed) {
  MetricTable out{table.experiment, table.sweep_keys, {}};
  for (const MetricRow& r : table.rows)
    if (r.seed == seed) out.rows.push_back(r);
  return out;
}

namespace {

json hist_json(const Histogram& h) { return json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

struct Metrics {
  std::map<std::string, TweakDistribution> tweaks;
  std::map<std::string, std::vector<FlowBucket>> flow;
  std::map<std::string, std::map<RowGroup, std::vector<PnlSample>>> pnl;
  std::map<std::string, SkewIntensity> skew;
};

Metrics compute_metrics(const MetricTable& t, int bins, double width) {
  Metrics m;
  if (has_lp_rows(t)) {
    m.tweaks = tweak_distribution(t, bins);
    m.flow = flow_by_tweak(t, width);
    m.skew = skew_intensity(t);
  }
  m.pnl = pnl_decomposition(t);
  return m;
}

json point_summary(const MetricTable& t, const std::string& key, const Metrics& m) {
  json j;
  const int point = static_cast<int>(std::find(t.sweep_keys.begin(), t.sweep_keys.end(), key) - t.sweep_keys.begin());
  double s_eps = 0, s_sym = 0, s_asym = 0, s_hedge = 0;
  long n_lp = 0;
  std::map<RowGroup, std::array<long, kLtActionCount>> choices;
  for (const MetricRow& r : t.rows) {
    if (r.point != point) continue;
    if (r.group == RowGroup::lp) {
      s_eps += r.eps;
      s_sym += r.eps_sym;
      s_asym += r.eps_asym;
      s_hedge += r.hedge;
      ++n_lp;
    } else if (r.choice) {
      ++choices[r.group][static_cast<int>(*r.choice)];
    }
  }
  j["key"] = key;
  j["lp_rows"] = n_lp;
  if (n_lp > 0) {
    const double n = static_cast<double>(n_lp);
    j["mean_eps"] = s_eps / n;
    j["mean_eps_sym"] = s_sym / n;
    j["mean_eps_asym"] = s_asym / n;
    j["mean_hedge"] = s_hedge / n;
    const auto& skew = m.skew.at(key);
    j["skew_intensity"] = skew.mean_abs_asym;
    j["skew_intensity_with_inventory"] = skew.mean_abs_asym_with_inventory;
    const auto& td = m.tweaks.at(key);
    j["tweak_histogram"] = {{"eps", hist_json(td.eps)}, {"eps_sym", hist_json(td.eps_sym)},
                            {"eps_asym", hist_json(td.eps_asym)}};
    json fb = json::array();
    for (const FlowBucket& b : m.flow.at(key))
      fb.push_back({{"lo", b.lo}, {"hi", b.hi}, {"lp_steps", b.lp_steps}, {"flow_volume", b.flow_volume},
                    {"pnl_volume", b.pnl_volume}, {"flow_mean", b.flow_mean()}, {"pnl_mean", b.pnl_mean()}});
    j["flow_by_bucket"] = fb;
  }
  json pnl = json::object();
  if (const auto it = m.pnl.find(key); it != m.pnl.end()) {
    for (const auto& [g, samples] : it->second) {
      double sp = 0, inv = 0;
      for (const auto& s : samples) {
        sp += s.spread;
        inv += s.inventory;
      }
      const double n = static_cast<double>(samples.size());
      pnl[std::string(to_string(g))] = {{"agent_episodes", samples.size()},
                                        {"mean_spread_pnl", sp / n},
                                        {"mean_inventory_pnl", inv / n},
                                        {"mean_total_pnl", (sp + inv) / n}};
    }
  }
  j["pnl"] = pnl;
  json freq = json::object();
  for (const auto& [g, c] : choices) {
    const double n = static_cast<double>(c[0] + c[1] + c[2]);
    freq[std::string(to_string(g))] = {{"sell", c[0] / n}, {"buy", c[1] / n}, {"hold", c[2] / n}};
  }
  j["lt_choice_frequencies"] = freq;
  return j;
}

} // namespace

json summarize(const MetricTable& table, int bins, double width) {
  json out;
  out["experiment"] = table.experiment;
  std::vector<std::uint64_t> seeds;
  for (const MetricRow& r : table.rows)
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
  const Metrics all = compute_metrics(table, bins, width);
  std::vector<MetricTable> subs;
  std::vector<Metrics> sub_metrics;
  for (std::uint64_t s : seeds) {
    subs.push_back(filter_seed(table, s));
    sub_metrics.push_back(compute_metrics(subs.back(), bins, width));
  }
  json points = json::array();
  for (const std::string& key : table.sweep_keys) {
    json p = point_summary(table, key, all);
    json per_seed = json::object();
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const std::uint64_t s = seeds[si];
      json ps = point_summary(subs[si], key, sub_metrics[si]);
      json slim;
      for (const char* k : {"mean_eps", "mean_eps_sym", "mean_eps_asym", "mean_hedge", "skew_intensity",
                            "skew_intensity_with_inventory", "pnl", "lt_choice_frequencies"})
        if (ps.contains(k)) slim[k] = ps[k];
      per_seed[std::to_string(s)] = slim;
    }
    p["per_seed"] = per_seed;
    points.push_back(p);
  }
  out["points"] = points;
  return out;
}

void evaluate_policies(MetricTable& table, int point, const EnvConfig& env_cfg, const rl::Policy& lp,
                       const rl::Policy& lt, std::uint64_t seed, int episodes, const rl::EpisodeOptions& mode,
                       int jobs) {
  std::vector<MetricTable> parts(static_cast<std::size_t>(episodes));
  const std::uint64_t base = derive_seed(seed, 0x6576616c);
  rl::parallel_for(parts.size(), jobs, [&](std::size_t e) {
    Env env(env_cfg);
    rl::EpisodeOptions eo = mode;
    eo.record = false;
    MetricTable& part = parts[e];
    rl::run_episode(env, lp, lt, rl::episode_seed(base, 0, static_cast<long>(e)), eo, [&](const Env& en) {
      append_step_rows(part, point, seed, static_cast<int>(e), en);
    });
  });
  for (auto& p : parts) table.rows.insert(table.rows.end(), p.rows.begin(), p.rows.end());
}

namespace {

std::string file_stem(const std::string& key) {
  std::string s;
  for (char c : key) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return s;
}

} // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const ProgressFn& progress) {
  spec.validate();
  // Training groups: points with identical training envs share a run.
  std::vector<std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(spec.sweep.size()); ++i) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const std::vector<int>& g) {
      return spec.sweep[static_cast<std::size_t>(g.front())].train_env == spec.sweep[static_cast<std::size_t>(i)].train_env;
    });
    if (it == groups.end()) groups.push_back({i});
    else it->push_back(i);
  }

  struct Job {
    int group = 0;
    std::size_t seed_index = 0;
    rl::TrainState state;
    std::vector<MetricTable> evals;  // per point of the group
  };
  std::vector<Job> jobs;
  for (int g = 0; g < static_cast<int>(groups.size()); ++g)
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
      Job& j = jobs.emplace_back();
      j.group = g;
      j.seed_index = s;
    }

  const int inner_jobs = jobs.size() > 1 ? 1 : spec.jobs;
  rl::parallel_for(jobs.size(), jobs.size() > 1 ? spec.jobs : 1, [&](std::size_t k) {
    Job& job = jobs[k];
    const auto& members = groups[static_cast<std::size_t>(job.group)];
    const std::uint64_t seed = spec.seeds[job.seed_index];
    rl::TrainOptions opts;
    opts.env = spec.sweep[static_cast<std::size_t>(members.front())].train_env;
    opts.lp = spec.lp_trainer;
    opts.lt = spec.lt_trainer;
    opts.iterations = spec.iterations;
    opts.seed = seed;
    opts.jobs = inner_jobs;
    opts.scripted_lp = spec.scripted_lp;
    job.state = rl::init_training(opts);
    rl::train(job.state, opts);
    if (progress)
      progress("trained " + spec.sweep[static_cast<std::size_t>(members.front())].key + " seed " + std::to_string(seed));
    rl::EpisodeOptions mode;
    mode.deterministic_lp = spec.deterministic_lp_eval;
    mode.deterministic_lt = spec.deterministic_lt_eval;
    mode.scripted_lp = spec.scripted_lp;
    for (int p : members) {
      MetricTable t;
      evaluate_policies(t, p, spec.sweep[static_cast<std::size_t>(p)].eval_env, job.state.lp, job.state.lt, seed,
                        spec.eval_episodes, mode, inner_jobs);
      job.evals.push_back(std::move(t));
    }
  });

  ExperimentResult res;
  res.table.experiment = spec.name;
  for (const auto& p : spec.sweep) res.table.sweep_keys.push_back(p.key);
  for (int p = 0; p < static_cast<int>(spec.sweep.size()); ++p) {
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
      for (const Job& job : jobs) {
        if (job.seed_index != s) continue;
        const auto& members = groups[static_cast<std::size_t>(job.group)];
        const auto at = std::find(members.begin(), members.end(), p);
        if (at == members.end()) continue;
        const MetricTable& t = job.evals[static_cast<std::size_t>(at - members.begin())];
        res.table.rows.insert(res.table.rows.end(), t.rows.begin(), t.rows.end());
      }
    }
  }
  for (const Job& job : jobs) {
    const auto& key = spec.sweep[static_cast<std::size_t>(groups[static_cast<std::size_t>(job.group)].front())].key;
    res.curves[key + "/seed" + std::to_string(spec.seeds[job.seed_index])] = job.state.curve;
  }
  res.summary = summarize(res.table, spec.tweak_bins, spec.flow_bucket_width);

  if (!spec.out_dir.empty()) {
    export_csv(res.table, spec.out_dir / "rows.csv");
    csv::write_file(spec.out_dir / "summary.json", res.summary.dump(1) + "\n");
    for (const Job& job : jobs) {
      const auto& key = spec.sweep[static_cast<std::size_t>(groups[static_cast<std::size_t>(job.group)].front())].key;
      const std::string stem = file_stem(key) + "_seed" + std::to_string(spec.seeds[job.seed_index]);
      csv::write_file(spec.out_dir / "curves" / (stem + ".csv"), rl::curve_csv(job.state.curve));
      rl::save_checkpoint(spec.out_dir / "checkpoints" / (stem + "_lp.json"), job.state.lp, spec.lp_trainer,
                          job.state.lp_opt, job.state.rng, job.state.iteration);
      rl::save_checkpoint(spec.out_dir / "checkpoints" / (stem + "_lt.json"), job.state.lt, spec.lt_trainer,
                          job.state.lt_opt, job.state.rng, job.state.iteration);
    }
  }
  return res;
}

namespace {

std::string fmt(double v) { return csv::number(v); }

EnvConfig desk_env() {
  EnvConfig e;
  e.n_lp = 3;
  e.n_lt_flow = 12;
  e.n_lt_pnl = 0;
  e.episode_len = 256;
  e.ecn_substeps = 16;
  e.lp_types.family = Family::lp;
  e.lp_types.w = ParamDist::uniform(0.2, 1.0);
  e.lp_types.alpha = ParamDist::fixed(5.0);
  e.lp_types.market_share_target = ParamDist::uniform(0.0, 0.6);
  e.lt_flow_types.family = Family::lt;
  e.lt_flow_types.w = ParamDist::fixed(0.0);
  e.lt_flow_types.alpha = ParamDist::fixed(1.0);
  e.lt_pnl_types.family = Family::lt;
  e.lt_pnl_types.w = ParamDist::fixed(1.0);
  e.lt_pnl_types.alpha = ParamDist::fixed(1.0);
  e.lt_pnl_types.gamma = ParamDist::fixed(0.5);
  return e;
}

rl::TrainerConfig desk_trainer() {
  rl::TrainerConfig c;
  c.optimizer = "adam";
  c.learning_rate = 1e-3;
  c.gae_lambda = 0.9;
  return c;
}

ExperimentSpec desk_spec(std::string name) {
  ExperimentSpec s;
  s.name = std::move(name);
  s.lp_trainer = desk_trainer();
  s.lt_trainer = desk_trainer();
  return s;
}

ExperimentSpec diversity() {
  ExperimentSpec s = desk_spec("diversity");
  for (int k : {0, 2, 4, 8, 12}) {
    EnvConfig e = desk_env();
    e.n_lt_pnl = k;
    s.sweep.push_back({"pnl_lt=" + std::to_string(k), e, e});
  }
  return s;
}

ExperimentSpec connectivity() {
  ExperimentSpec s = desk_spec("connectivity");
  EnvConfig train = desk_env();
  train.n_lt_pnl = 2;
  train.lp_types.connect_prob_lt = ParamDist::uniform(0.1, 1.0);
  for (double p : {0.1, 0.25, 0.5, 0.75, 1.0}) {
    EnvConfig eval = train;
    eval.lp_types.connect_prob_lt = ParamDist::fixed(p);
    s.sweep.push_back({"p=" + fmt(p), train, eval});
  }
  return s;
}

ExperimentSpec risk_aversion() {
  ExperimentSpec s = desk_spec("risk-aversion");
  EnvConfig train = desk_env();
  train.n_lt_pnl = 2;
  train.lp_types.w = ParamDist::fixed(1.0);
  train.lp_types.gamma = ParamDist::uniform(0.0, 0.9);
  for (double g : {0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9}) {
    EnvConfig eval = train;
    eval.lp_types.gamma = ParamDist::fixed(g);
    s.sweep.push_back({"gamma=" + fmt(g), train, eval});
  }
  return s;
}

ExperimentSpec toy_trend() {
  ExperimentSpec s;
  s.name = "toy-trend";
  s.scripted_lp = LPAction{0.0, 0.0, 0.0};
  s.iterations = 600;
  s.eval_episodes = 100;
  for (double w : {0.0, 0.25, 0.75, 1.0}) {
    EnvConfig e;
    e.n_lp = 1;
    e.n_lt_flow = 1;
    e.n_lt_pnl = 0;
    e.lt_flow_types.family = Family::lt;
    e.lt_flow_types.w = ParamDist::fixed(w);
    e.lt_flow_types.alpha = ParamDist::fixed(0.05);
    e.lt_flow_types.flow_targets = {ParamDist::fixed(0.25), ParamDist::fixed(0.75), ParamDist::fixed(0.0)};
    e.trend.drift = 0.005;
    s.sweep.push_back({"w=" + fmt(w), e, e});
  }
  return s;
}

} // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"diversity", "connectivity", "risk-aversion", "toy-trend"};
  return names;
}

ExperimentSpec make_preset(const std::string& name) {
  if (name == "diversity") return diversity();
  if (name == "connectivity") return connectivity();
  if (name == "risk-aversion") return risk_aversion();
  if (name == "toy-trend") return toy_trend();
  std::string list;
  for (const auto& n : preset_names()) list += (list.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "' (available: " + list + ")");
}

} // namespace mktsim
