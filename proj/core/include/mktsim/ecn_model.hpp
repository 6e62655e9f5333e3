#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mktsim/gaussian_mixture.hpp"
#include "mktsim/order_book.hpp"
#include "mktsim/rng.hpp"

namespace mktsim {

/// Statistical model of the ECN book built from three Gaussian mixtures:
/// the initial snapshot, the per-level volume change conditioned on the
/// current snapshot, and the size of the child orders a change is split into.
struct EcnModel {
  int levels = 5;            // n levels per side
  int dt = 1;                // steps between evolutions
  double tick_size = 0.01;
  double initial_mid = 100.0;
  GaussianMixture init_mixture;    // dim 2n: [bid_1..n, ask_1..n]
  GaussianMixture delta_mixture;   // dim 4n: [volumes; volume changes]
  GaussianMixture decomp_mixture;  // dim 1: child order size

  void validate() const;
};

/// An EcnModel with its conditional sampler precomputed. Immutable and
/// shareable across threads.
class EcnDynamics {
public:
  explicit EcnDynamics(EcnModel model);

  const EcnModel& model() const noexcept { return model_; }
  const ConditionalMixture& conditional() const noexcept { return cond_; }

private:
  EcnModel model_;
  ConditionalMixture cond_;
};

struct AppliedOrder {
  enum class Kind : std::uint8_t { limit, cancel };
  Kind kind = Kind::limit;
  Side book_side = Side::buy;
  Ticks price = 0;
  double qty = 0.0;
};

/// Draws an initial snapshot, clips negative volumes to zero, rounds to
/// whole units and places one ECN order per non-empty level around the
/// model's initial mid. Resamples until both sides are non-empty.
OrderBook sample_initial_book(const EcnDynamics& dyn, Rng& rng, int max_retries = 100);

/// One evolution of the book: samples the volume change of every snapshot
/// level conditioned on the current volumes, splits each change into child
/// orders and applies them (limit orders for increases, cancellations of
/// the newest ECN orders for decreases, truncated to the resting volume).
std::vector<AppliedOrder> evolve_book(OrderBook& book, const EcnDynamics& dyn, Rng& rng);

/// Applies an explicit change vector [bid_1..n, ask_1..n] to the snapshot
/// levels of the book.
std::vector<AppliedOrder> apply_volume_change(OrderBook& book, const std::vector<double>& change,
                                              const GaussianMixture& decomp, Rng& rng);

/// Refills an empty side from the initial mixture, anchored on the other
/// side (or on fallback_mid when both are empty). Returns true if it acted.
bool replenish(OrderBook& book, const EcnDynamics& dyn, Rng& rng, double fallback_mid);

/// One row of an L2 snapshot series.
struct SnapshotRow {
  long step = 0;
  double mid = 0.0;
  std::vector<double> bid_volumes;
  std::vector<double> ask_volumes;

  std::vector<double> as_vector() const;
};

/// Ground-truth process used to synthesize L2 data: an Ornstein-Uhlenbeck
/// mid on the half-tick grid and AR(1) level volumes around a depth profile.
struct SynthConfig {
  long rows = 5000;
  int levels = 5;
  double tick_size = 0.01;
  double initial_mid = 100.0;
  double mid_reversion = 0.05;
  double mid_volatility = 0.01;
  double base_volume = 40.0;      // mean volume at level 1
  double volume_slope = 30.0;     // extra mean volume per level of depth
  double volume_noise = 60.0;
  double volume_persistence = 0.7;
};

std::vector<SnapshotRow> synth_l2_dataset(const SynthConfig& cfg, Rng& rng);

void write_snapshot_csv(const std::vector<SnapshotRow>& rows, int levels, const std::filesystem::path& path);
std::string snapshot_csv(const std::vector<SnapshotRow>& rows, int levels);
std::vector<SnapshotRow> read_snapshot_csv(const std::filesystem::path& path);

struct CalibrationOptions {
  int init_components = 3;
  int delta_components = 3;
  int decomp_components = 2;
  int dt = 1;
  double tick_size = 0.01;
  /// Adds the bid/ask mirror image of every fitted component so the book
  /// dynamics carry no directional bias.
  bool symmetrize = true;
  FitOptions fit;
};

struct MixtureDiagnostics {
  double initial_log_likelihood = 0.0;
  double final_log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct CalibrationResult {
  EcnModel model;
  MixtureDiagnostics init, delta, decomp;
};

/// Mixture of the components of gm and their images under swapping the bid
/// and ask blocks of every group of 2n coordinates; weights are halved.
GaussianMixture mirror_sides(const GaussianMixture& gm, int levels);

/// Fits the three mixtures to a snapshot series.
CalibrationResult calibrate(const std::vector<SnapshotRow>& rows, const CalibrationOptions& opts,
                            std::uint64_t seed);

std::string model_to_json(const EcnModel& model);
EcnModel model_from_json(const std::string& text);
void save_model(const EcnModel& model, const std::filesystem::path& path);
EcnModel load_model(const std::filesystem::path& path);

/// Model calibrated on the default synthetic data set; cached per seed.
std::shared_ptr<const EcnDynamics> default_dynamics(std::uint64_t seed = 7);

} // namespace mktsim
