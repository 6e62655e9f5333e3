#include "mktsim/ecn_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <nlohmann/json.hpp>

#include "mktsim/csv.hpp"
#include "mktsim/error.hpp"

namespace mktsim {

using nlohmann::json;

void EcnModel::validate() const {
  if (levels < 1) throw DegenerateModel("model needs at least one level");
  if (dt < 1) throw DegenerateModel("dt must be at least 1");
  if (!(tick_size > 0.0)) throw DegenerateModel("tick size must be positive");
  init_mixture.validate();
  delta_mixture.validate();
  decomp_mixture.validate();
  if (init_mixture.dim() != 2 * levels) throw DegenerateModel("initial mixture must have dimension 2n");
  if (delta_mixture.dim() != 4 * levels) throw DegenerateModel("delta mixture must have dimension 4n");
  if (decomp_mixture.dim() != 1) throw DegenerateModel("decomposition mixture must be one-dimensional");
}

EcnDynamics::EcnDynamics(EcnModel model) : model_(std::move(model)) {
  model_.validate();
  cond_ = ConditionalMixture(model_.delta_mixture, 2 * model_.levels);
}

namespace {

double child_size(const GaussianMixture& decomp, Rng& rng, double remaining) {
  const double drawn = std::round(sample(decomp, rng)[0]);
  return std::min(std::max(1.0, drawn), remaining);
}

std::vector<double> clipped_volumes(const Eigen::VectorXd& v) {
  std::vector<double> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = std::max(0.0, std::round(v[i]));
  return out;
}

bool side_has_volume(const std::vector<double>& vols, int n, Side side) {
  const int off = side == Side::buy ? 0 : n;
  for (int k = 0; k < n; ++k)
    if (vols[off + k] > 0.0) return true;
  return false;
}

void place_side(OrderBook& book, const std::vector<double>& vols, int n, Side side, Ticks anchor) {
  const int off = side == Side::buy ? 0 : n;
  for (int k = 1; k <= n; ++k) {
    const double q = vols[off + k - 1];
    if (q <= 0.0) continue;
    const Ticks p = side == Side::buy ? anchor - k : anchor + k;
    book.submit_limit_ticks(side, p, q, kEcnId);
  }
}

} // namespace

OrderBook sample_initial_book(const EcnDynamics& dyn, Rng& rng, int max_retries) {
  const EcnModel& m = dyn.model();
  const int n = m.levels;
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    const auto vols = clipped_volumes(sample(m.init_mixture, rng));
    if (!side_has_volume(vols, n, Side::buy) || !side_has_volume(vols, n, Side::sell)) continue;
    OrderBook book(m.tick_size);
    const Ticks center = book.to_ticks(std::round(m.initial_mid / m.tick_size) * m.tick_size);
    place_side(book, vols, n, Side::buy, center);
    place_side(book, vols, n, Side::sell, center);
    return book;
  }
  throw DegenerateModel("initial mixture did not produce a two-sided book within " +
                        std::to_string(max_retries) + " draws");
}

std::vector<AppliedOrder> apply_volume_change(OrderBook& book, const std::vector<double>& change,
                                              const GaussianMixture& decomp, Rng& rng) {
  if (change.size() % 2 != 0) throw ShapeMismatch("volume change must cover both sides");
  const int n = static_cast<int>(change.size() / 2);
  std::vector<Ticks> prices(change.size());
  for (int k = 1; k <= n; ++k) {
    prices[k - 1] = book.level_ticks(Side::buy, k);
    prices[n + k - 1] = book.level_ticks(Side::sell, k);
  }
  std::vector<AppliedOrder> applied;
  for (std::size_t i = 0; i < change.size(); ++i) {
    const Side side = static_cast<int>(i) < n ? Side::buy : Side::sell;
    const Ticks price = prices[i];
    const double d = std::round(change[i]);
    if (d > 0.0) {
      double remaining = d;
      while (remaining > 0.0) {
        const double s = child_size(decomp, rng, remaining);
        book.submit_limit_ticks(side, price, s, kEcnId);
        applied.push_back({AppliedOrder::Kind::limit, side, price, s});
        remaining -= s;
      }
    } else if (d < 0.0) {
      double remaining = std::min(-d, book.volume_at(side, price));
      while (remaining > 0.0) {
        const double s = child_size(decomp, rng, remaining);
        double left = s;
        while (left > 0.0) {
          const auto* queue = book.queue_at(side, price);
          if (!queue || queue->empty()) break;
          auto newest = std::find_if(queue->rbegin(), queue->rend(),
                                     [](const RestingOrder& o) { return o.owner == kEcnId; });
          if (newest == queue->rend()) break;
          left -= book.reduce(newest->id, left);
        }
        const double removed = s - left;
        if (removed <= 0.0) {
          remaining = 0.0;
          break;
        }
        applied.push_back({AppliedOrder::Kind::cancel, side, price, removed});
        remaining -= removed;
      }
    }
  }
  return applied;
}

std::vector<AppliedOrder> evolve_book(OrderBook& book, const EcnDynamics& dyn, Rng& rng) {
  const int n = dyn.model().levels;
  const auto current = book.snapshot(n).as_vector();
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(current.data(), static_cast<Eigen::Index>(current.size()));
  const Eigen::VectorXd delta = dyn.conditional().sample(x, rng);
  if (!delta.allFinite()) throw DegenerateModel("conditional sample is not finite");
  return apply_volume_change(book, std::vector<double>(delta.data(), delta.data() + delta.size()),
                             dyn.model().decomp_mixture, rng);
}

bool replenish(OrderBook& book, const EcnDynamics& dyn, Rng& rng, double fallback_mid) {
  if (book.has_bids() && book.has_asks()) return false;
  const EcnModel& m = dyn.model();
  const int n = m.levels;
  const bool need_bid = !book.has_bids();
  const bool need_ask = !book.has_asks();
  for (int attempt = 0; attempt < 100; ++attempt) {
    const auto vols = clipped_volumes(sample(m.init_mixture, rng));
    if (need_bid && !side_has_volume(vols, n, Side::buy)) continue;
    if (need_ask && !side_has_volume(vols, n, Side::sell)) continue;
    if (need_bid && need_ask) {
      const Ticks center = static_cast<Ticks>(std::llround(fallback_mid / m.tick_size));
      place_side(book, vols, n, Side::buy, center);
      place_side(book, vols, n, Side::sell, center);
    } else if (need_bid) {
      place_side(book, vols, n, Side::buy, book.best_ask_ticks());
    } else {
      place_side(book, vols, n, Side::sell, book.best_bid_ticks());
    }
    return true;
  }
  throw DegenerateModel("could not replenish an empty book side");
}

std::vector<double> SnapshotRow::as_vector() const {
  std::vector<double> v(bid_volumes);
  v.insert(v.end(), ask_volumes.begin(), ask_volumes.end());
  return v;
}

std::vector<SnapshotRow> synth_l2_dataset(const SynthConfig& cfg, Rng& rng) {
  if (cfg.rows < 0 || cfg.levels < 1) throw InvalidArgument("synthetic data needs rows >= 0 and levels >= 1");
  const double half_tick = 0.5 * cfg.tick_size;
  std::vector<SnapshotRow> out;
  out.reserve(static_cast<std::size_t>(cfg.rows));
  std::vector<double> noise(2 * cfg.levels, 0.0);
  double mid = cfg.initial_mid;
  for (long t = 0; t < cfg.rows; ++t) {
    SnapshotRow row;
    row.step = t;
    row.mid = std::round(mid / half_tick) * half_tick;
    row.bid_volumes.resize(cfg.levels);
    row.ask_volumes.resize(cfg.levels);
    for (int i = 0; i < 2 * cfg.levels; ++i) {
      const int depth = i % cfg.levels;
      const double mean = cfg.base_volume + cfg.volume_slope * depth;
      const double v = std::max(0.0, std::round(mean + noise[i]));
      (i < cfg.levels ? row.bid_volumes[depth] : row.ask_volumes[depth]) = v;
    }
    out.push_back(std::move(row));
    mid += cfg.mid_reversion * (cfg.initial_mid - mid) + cfg.mid_volatility * rng.normal();
    for (double& u : noise) u = cfg.volume_persistence * u + cfg.volume_noise * rng.normal();
  }
  return out;
}

std::string snapshot_csv(const std::vector<SnapshotRow>& rows, int levels) {
  std::string text = "step,mid";
  for (int k = 1; k <= levels; ++k) text += ",bid_vol_" + std::to_string(k);
  for (int k = 1; k <= levels; ++k) text += ",ask_vol_" + std::to_string(k);
  text += '\n';
  for (const auto& r : rows) {
    if (static_cast<int>(r.bid_volumes.size()) != levels || static_cast<int>(r.ask_volumes.size()) != levels)
      throw ShapeMismatch("snapshot row has the wrong number of levels");
    text += csv::number(static_cast<long long>(r.step));
    text += ',' + csv::number(r.mid);
    for (double v : r.bid_volumes) text += ',' + csv::number(v);
    for (double v : r.ask_volumes) text += ',' + csv::number(v);
    text += '\n';
  }
  return text;
}

void write_snapshot_csv(const std::vector<SnapshotRow>& rows, int levels, const std::filesystem::path& path) {
  csv::write_file(path, snapshot_csv(rows, levels));
}

std::vector<SnapshotRow> read_snapshot_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("snapshot file not found: " + path.string());
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw SchemaError("snapshot file is empty: " + path.string());
  const auto header = csv::split(lines[0]);
  if (header.size() < 4 || header.size() % 2 != 0 || header[0] != "step" || header[1] != "mid")
    throw SchemaError("snapshot header must be step,mid,bid_vol_1..n,ask_vol_1..n");
  const int n = static_cast<int>((header.size() - 2) / 2);
  for (int k = 1; k <= n; ++k) {
    if (header[1 + k] != "bid_vol_" + std::to_string(k) || header[1 + n + k] != "ask_vol_" + std::to_string(k))
      throw SchemaError("snapshot header must be step,mid,bid_vol_1..n,ask_vol_1..n");
  }
  std::vector<SnapshotRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split(lines[i]);
    if (f.size() != header.size())
      throw SchemaError("line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " fields");
    SnapshotRow r;
    r.step = static_cast<long>(csv::parse_int(f[0]));
    r.mid = csv::parse_double(f[1]);
    for (int k = 0; k < n; ++k) {
      r.bid_volumes.push_back(csv::parse_double(f[2 + k]));
      r.ask_volumes.push_back(csv::parse_double(f[2 + n + k]));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

MixtureDiagnostics diagnostics(const FitResult& fit) {
  return MixtureDiagnostics{fit.log_likelihood_trace.front(), fit.log_likelihood_trace.back(), fit.iterations,
                            fit.converged};
}

std::vector<Eigen::VectorXd> to_eigen(const std::vector<std::vector<double>>& rows) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size())));
  return out;
}

} // namespace

GaussianMixture mirror_sides(const GaussianMixture& gm, int levels) {
  const int d = gm.dim();
  if (levels < 1 || d % (2 * levels) != 0) throw InvalidArgument("mixture dimension is not a multiple of 2 * levels");
  Eigen::VectorXi perm(d);
  for (int i = 0; i < d; ++i) {
    const int block = i / (2 * levels) * (2 * levels);
    const int j = i - block;
    perm[i] = block + (j < levels ? j + levels : j - levels);
  }
  const Eigen::PermutationMatrix<Eigen::Dynamic> p(perm);
  GaussianMixture out;
  for (int c = 0; c < gm.k(); ++c) {
    out.weights.push_back(0.5 * gm.weights[c]);
    out.means.push_back(gm.means[c]);
    out.covs.push_back(gm.covs[c]);
  }
  for (int c = 0; c < gm.k(); ++c) {
    out.weights.push_back(0.5 * gm.weights[c]);
    out.means.push_back(p * gm.means[c]);
    out.covs.push_back(p * gm.covs[c] * p.transpose());
  }
  return out;
}

CalibrationResult calibrate(const std::vector<SnapshotRow>& rows, const CalibrationOptions& opts,
                            std::uint64_t seed) {
  if (rows.size() < 2) throw InsufficientData("calibration needs at least two snapshots");
  const int n = static_cast<int>(rows.front().bid_volumes.size());
  if (opts.dt < 1) throw InvalidArgument("dt must be at least 1");

  std::vector<std::vector<double>> snaps;
  for (const auto& r : rows) {
    if (static_cast<int>(r.bid_volumes.size()) != n || static_cast<int>(r.ask_volumes.size()) != n)
      throw ShapeMismatch("snapshot rows disagree on the number of levels");
    snaps.push_back(r.as_vector());
  }

  std::vector<std::vector<double>> joint;
  for (std::size_t t = 0; t + opts.dt < snaps.size(); ++t) {
    std::vector<double> v = snaps[t];
    for (int i = 0; i < 2 * n; ++i) v.push_back(snaps[t + opts.dt][i] - snaps[t][i]);
    joint.push_back(std::move(v));
  }

  // Single-step level changes approximate individual order sizes.
  std::vector<std::vector<double>> sizes;
  for (std::size_t t = 0; t + 1 < snaps.size(); ++t)
    for (int i = 0; i < 2 * n; ++i) {
      const double d = std::abs(snaps[t + 1][i] - snaps[t][i]);
      if (d > 0.0) sizes.push_back({d});
    }

  CalibrationResult out;
  EcnModel& m = out.model;
  m.levels = n;
  m.dt = opts.dt;
  m.tick_size = opts.tick_size;
  m.initial_mid = rows.front().mid;

  const FitResult init = fit_mixture(to_eigen(snaps), opts.init_components, derive_seed(seed, 1), opts.fit);
  const FitResult delta = fit_mixture(to_eigen(joint), opts.delta_components, derive_seed(seed, 2), opts.fit);
  m.init_mixture = opts.symmetrize ? mirror_sides(init.mixture, n) : init.mixture;
  m.delta_mixture = opts.symmetrize ? mirror_sides(delta.mixture, n) : delta.mixture;
  out.init = diagnostics(init);
  out.delta = diagnostics(delta);
  if (sizes.empty()) {
    // A series without any volume change carries no size information.
    m.decomp_mixture = GaussianMixture::point_mass(Eigen::VectorXd::Constant(1, 1.0));
  } else {
    const FitResult decomp =
        fit_mixture(to_eigen(sizes), opts.decomp_components, derive_seed(seed, 3), opts.fit);
    m.decomp_mixture = decomp.mixture;
    out.decomp = diagnostics(decomp);
  }
  m.validate();
  return out;
}

namespace {

json mixture_json(const GaussianMixture& gm) {
  json j;
  j["k"] = gm.k();
  j["weights"] = gm.weights;
  json means = json::array(), covs = json::array();
  for (int c = 0; c < gm.k(); ++c) {
    means.push_back(std::vector<double>(gm.means[c].data(), gm.means[c].data() + gm.means[c].size()));
    json cov = json::array();
    for (Eigen::Index r = 0; r < gm.covs[c].rows(); ++r) {
      std::vector<double> row(gm.covs[c].cols());
      for (Eigen::Index col = 0; col < gm.covs[c].cols(); ++col) row[col] = gm.covs[c](r, col);
      cov.push_back(row);
    }
    covs.push_back(cov);
  }
  j["means"] = means;
  j["covs"] = covs;
  return j;
}

GaussianMixture mixture_from(const json& j, const std::string& name) {
  try {
    GaussianMixture gm;
    const int k = j.at("k").get<int>();
    gm.weights = j.at("weights").get<std::vector<double>>();
    const auto means = j.at("means").get<std::vector<std::vector<double>>>();
    const auto covs = j.at("covs").get<std::vector<std::vector<std::vector<double>>>>();
    if (static_cast<int>(gm.weights.size()) != k || static_cast<int>(means.size()) != k ||
        static_cast<int>(covs.size()) != k)
      throw SchemaError(name + ": component count does not match k");
    for (int c = 0; c < k; ++c) {
      const auto d = static_cast<Eigen::Index>(means[c].size());
      gm.means.push_back(Eigen::Map<const Eigen::VectorXd>(means[c].data(), d));
      Eigen::MatrixXd cov(d, d);
      if (static_cast<Eigen::Index>(covs[c].size()) != d) throw SchemaError(name + ": covariance shape mismatch");
      for (Eigen::Index r = 0; r < d; ++r) {
        if (static_cast<Eigen::Index>(covs[c][r].size()) != d) throw SchemaError(name + ": covariance shape mismatch");
        for (Eigen::Index col = 0; col < d; ++col) cov(r, col) = covs[c][r][col];
      }
      gm.covs.push_back(cov);
    }
    return gm;
  } catch (const json::exception& e) {
    throw SchemaError(name + ": " + e.what());
  }
}

} // namespace

std::string model_to_json(const EcnModel& model) {
  json j;
  j["n"] = model.levels;
  j["dt"] = model.dt;
  j["tick_size"] = model.tick_size;
  j["initial_mid"] = model.initial_mid;
  j["init_mixture"] = mixture_json(model.init_mixture);
  j["delta_mixture"] = mixture_json(model.delta_mixture);
  j["decomp_mixture"] = mixture_json(model.decomp_mixture);
  return j.dump(1) + "\n";
}

EcnModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
  }
  EcnModel m;
  try {
    m.levels = j.at("n").get<int>();
    m.dt = j.at("dt").get<int>();
    m.tick_size = j.at("tick_size").get<double>();
    m.initial_mid = j.at("initial_mid").get<double>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model file: ") + e.what());
  }
  m.init_mixture = mixture_from(j.at("init_mixture"), "init_mixture");
  m.delta_mixture = mixture_from(j.at("delta_mixture"), "delta_mixture");
  m.decomp_mixture = mixture_from(j.at("decomp_mixture"), "decomp_mixture");
  m.validate();
  return m;
}

void save_model(const EcnModel& model, const std::filesystem::path& path) {
  csv::write_file(path, model_to_json(model));
}

EcnModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("model file not found: " + path.string());
  return model_from_json(csv::read_file(path));
}

std::shared_ptr<const EcnDynamics> default_dynamics(std::uint64_t seed) {
  static std::mutex mu;
  static std::map<std::uint64_t, std::shared_ptr<const EcnDynamics>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(seed);
  if (it != cache.end()) return it->second;
  Rng rng(derive_seed(seed, 0x6c32));
  const auto rows = synth_l2_dataset(SynthConfig{}, rng);
  auto dyn = std::make_shared<const EcnDynamics>(calibrate(rows, CalibrationOptions{}, seed).model);
  cache.emplace(seed, dyn);
  return dyn;
}

} // namespace mktsim
