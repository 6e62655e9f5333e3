#include "mktsim/rl/mlp.hpp"

#include <cmath>
#include <string>

#include "mktsim/error.hpp"

namespace mktsim::rl {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw InvalidArgument("an MLP needs at least an input and an output layer");
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw InvalidArgument("layer sizes must be positive");
    offsets_.push_back(n);
    n += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Eigen::VectorXd::Zero(n);
}

void Mlp::init(Rng& rng, double output_gain) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const double scale = (l + 1 == layer_count() ? output_gain : 1.0) / std::sqrt(static_cast<double>(in));
    double* w = params_.data() + offsets_[l];
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(in) * out; ++i) w[i] = scale * rng.normal();
    for (int i = 0; i < out; ++i) w[static_cast<Eigen::Index>(in) * out + i] = 0.0;
  }
}

void Mlp::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size())
    throw ShapeMismatch("expected " + std::to_string(params_.size()) + " parameters, got " +
                        std::to_string(p.size()));
  params_ = p;
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t l) const {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Cache cache;
  return forward(x, cache);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (x.rows() != input_size())
    throw ShapeMismatch("MLP input has " + std::to_string(x.rows()) + " rows, expected " +
                        std::to_string(input_size()));
  cache.activations.clear();
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * cache.activations.back();
    z.colwise() += bias(l);
    if (l + 1 < layer_count()) z = z.array().tanh().matrix();
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

Eigen::VectorXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out, Eigen::MatrixXd* d_input) const {
  if (cache.activations.size() != sizes_.size()) throw ShapeMismatch("MLP cache does not match the network");
  const Eigen::MatrixXd& out = cache.activations.back();
  if (d_out.rows() != out.rows() || d_out.cols() != out.cols()) throw ShapeMismatch("MLP upstream gradient shape");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = d_out;
  for (std::size_t l = layer_count(); l-- > 0;) {
    const Eigen::MatrixXd& a_in = cache.activations[l];
    const Eigen::Index rows = sizes_[l + 1], cols = sizes_[l];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + offsets_[l], rows, cols) = delta * a_in.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + offsets_[l] + rows * cols, rows) = delta.rowwise().sum();
    if (l == 0 && !d_input) break;
    Eigen::MatrixXd back = weight(l).transpose() * delta;
    if (l > 0) back.array() *= 1.0 - a_in.array().square();
    else *d_input = std::move(back);
    delta = std::move(back);
  }
  return grad;
}

} // namespace mktsim::rl
