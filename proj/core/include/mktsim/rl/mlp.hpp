#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mktsim/rng.hpp"

namespace mktsim::rl {

/// Fully connected net, tanh hidden layers and a linear output layer.
/// Parameters live in one flat vector, layer by layer as [W (column-major,
/// out x in), b], so optimizers and checkpoints see a single array.
/// Inputs and outputs are batched as columns.
class Mlp {
public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, hidden outputs..., output
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> layer_sizes);

  /// Weights ~ N(0, gain^2 / fan_in), biases zero; output layer scaled by
  /// output_gain.
  void init(Rng& rng, double output_gain = 1.0);

  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  int input_size() const noexcept { return sizes_.front(); }
  int output_size() const noexcept { return sizes_.back(); }
  std::size_t layer_count() const noexcept { return sizes_.size() - 1; }

  Eigen::VectorXd& params() noexcept { return params_; }
  const Eigen::VectorXd& params() const noexcept { return params_; }
  /// Throws ShapeMismatch if the length is wrong.
  void set_params(const Eigen::VectorXd& p);

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  /// Gradient of sum(d_out .* output) w.r.t. the parameters, in params()
  /// layout. When d_input is given it receives the gradient w.r.t. x.
  Eigen::VectorXd backward(const Cache& cache, const Eigen::MatrixXd& d_out,
                           Eigen::MatrixXd* d_input = nullptr) const;

private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;  // start of W per layer; b follows W
  Eigen::VectorXd params_;
};

} // namespace mktsim::rl
