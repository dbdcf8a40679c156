#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relreg/error.hpp"
#include "relreg/point_cloud.hpp"
#include "relreg/rng.hpp"

namespace relreg {

enum class Activation { identity, relu };

// y = act(W x + b); W is out x in.
struct DenseLayer {
  Matrix weight;
  Vector bias;
  Activation activation = Activation::identity;
};

namespace detail {

inline std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

}  // namespace detail

// Dense feed-forward network. Every parameter change gets a fresh stamp so
// forward caches can be checked against the parameters they were computed
// with; copies share the stamp because they share the values.
class MlpModel {
 public:
  MlpModel() = default;

  // Glorot-uniform weights, zero biases. sizes = {in, h1, ..., out} with one
  // activation per layer.
  MlpModel(const std::vector<Index>& sizes, const std::vector<Activation>& activations,
           RngStream& rng) {
    shape(sizes, activations);
    for (DenseLayer& l : layers_) {
      const double bound =
          std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
      for (Index j = 0; j < l.weight.cols(); ++j)
        for (Index i = 0; i < l.weight.rows(); ++i)
          l.weight(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    }
  }

  static MlpModel zeros(const std::vector<Index>& sizes,
                        const std::vector<Activation>& activations) {
    MlpModel m;
    m.shape(sizes, activations);
    return m;
  }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  Index input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.cols(); }
  Index output_dim() const { return layers_.empty() ? 0 : layers_.back().weight.rows(); }
  std::uint64_t stamp() const noexcept { return stamp_; }

  std::vector<Index> layer_sizes() const {
    std::vector<Index> out;
    if (layers_.empty()) return out;
    out.push_back(input_dim());
    for (const DenseLayer& l : layers_) out.push_back(l.weight.rows());
    return out;
  }

  std::vector<Activation> activations() const {
    std::vector<Activation> out;
    for (const DenseLayer& l : layers_) out.push_back(l.activation);
    return out;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const DenseLayer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Layer by layer: weight in column-major order, then bias.
  Vector parameters() const {
    Vector out(parameter_count());
    Index at = 0;
    for (const DenseLayer& l : layers_) {
      out.segment(at, l.weight.size()) = l.weight.reshaped();
      at += l.weight.size();
      out.segment(at, l.bias.size()) = l.bias;
      at += l.bias.size();
    }
    return out;
  }

  void set_parameters(const Vector& p) {
    if (p.size() != parameter_count()) {
      throw InvalidInput("MlpModel::set_parameters: expected " +
                         std::to_string(parameter_count()) + " values, got " +
                         std::to_string(p.size()));
    }
    Index at = 0;
    for (DenseLayer& l : layers_) {
      l.weight.reshaped() = p.segment(at, l.weight.size());
      at += l.weight.size();
      l.bias = p.segment(at, l.bias.size());
      at += l.bias.size();
    }
    stamp_ = detail::next_stamp();
  }

  // Direct write access; the stamp is renewed.
  DenseLayer& mutable_layer(std::size_t i) {
    stamp_ = detail::next_stamp();
    return layers_.at(i);
  }

 private:
  void shape(const std::vector<Index>& sizes, const std::vector<Activation>& activations) {
    if (sizes.size() < 2 || activations.size() != sizes.size() - 1) {
      throw InvalidInput("MlpModel: need at least two sizes and one activation per layer");
    }
    for (Index s : sizes) {
      if (s < 1) throw InvalidInput("MlpModel: layer sizes must be >= 1");
    }
    layers_.clear();
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      layers_.push_back(DenseLayer{Matrix::Zero(sizes[i + 1], sizes[i]),
                                   Vector::Zero(sizes[i + 1]), activations[i]});
    }
    stamp_ = detail::next_stamp();
  }

  std::vector<DenseLayer> layers_;
  std::uint64_t stamp_ = 0;
};

// Forward cache for one batch (one sample per row).
struct MlpActivations {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  Matrix output;
  std::uint64_t stamp = 0;
};

inline MlpActivations mlp_apply(const MlpModel& model, const Matrix& input) {
  if (model.depth() == 0) throw InvalidInput("mlp_apply: empty model");
  if (input.cols() != model.input_dim()) {
    throw InvalidInput("mlp_apply: input has " + std::to_string(input.cols()) +
                       " columns, model expects " + std::to_string(model.input_dim()));
  }
  MlpActivations out;
  out.stamp = model.stamp();
  Matrix h = input;
  for (const DenseLayer& l : model.layers()) {
    Matrix z = h * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    out.inputs.push_back(std::move(h));
    h = l.activation == Activation::relu ? Matrix(z.cwiseMax(0.0)) : z;
    out.pre.push_back(std::move(z));
  }
  out.output = std::move(h);
  return out;
}

struct MlpGradients {
  std::vector<Matrix> d_weight;
  std::vector<Vector> d_bias;
  Matrix d_input;

  // Same layout as MlpModel::parameters().
  Vector flat() const {
    Index n = 0;
    for (std::size_t i = 0; i < d_weight.size(); ++i) n += d_weight[i].size() + d_bias[i].size();
    Vector out(n);
    Index at = 0;
    for (std::size_t i = 0; i < d_weight.size(); ++i) {
      out.segment(at, d_weight[i].size()) = d_weight[i].reshaped();
      at += d_weight[i].size();
      out.segment(at, d_bias[i].size()) = d_bias[i];
      at += d_bias[i].size();
    }
    return out;
  }
};

// Backward pass for a scalar loss whose gradient with respect to the output
// batch is `d_output`. The ReLU derivative at 0 is taken as 0.
inline MlpGradients mlp_grad(const MlpModel& model, const MlpActivations& cache,
                             const Matrix& d_output) {
  if (cache.stamp != model.stamp() || cache.pre.size() != model.depth()) {
    throw InvalidState("mlp_grad: activations were not recorded with the current parameters");
  }
  if (d_output.rows() != cache.output.rows() || d_output.cols() != cache.output.cols()) {
    throw InvalidInput("mlp_grad: output gradient shape does not match the forward output");
  }
  const std::size_t depth = model.depth();
  MlpGradients g;
  g.d_weight.resize(depth);
  g.d_bias.resize(depth);
  Matrix dh = d_output;
  for (std::size_t k = depth; k-- > 0;) {
    const DenseLayer& l = model.layers()[k];
    Matrix dz = l.activation == Activation::relu
                    ? Matrix(dh.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix()))
                    : dh;
    g.d_weight[k] = dz.transpose() * cache.inputs[k];
    g.d_bias[k] = dz.colwise().sum().transpose();
    dh = dz * l.weight;
  }
  g.d_input = std::move(dh);
  return g;
}

// z = mean + eps * exp(log_var / 2).
struct ReparamSample {
  Vector z;
  Vector eps;
  Vector std;
};

inline ReparamSample reparam_with_noise(const Vector& mean, const Vector& log_var,
                                        const Vector& eps) {
  if (mean.size() != log_var.size() || mean.size() != eps.size()) {
    throw InvalidInput("reparam_sample: mean, log-variance and noise differ in length");
  }
  Vector std = (0.5 * log_var.array()).exp().matrix();
  Vector z = mean + eps.cwiseProduct(std);
  return {std::move(z), eps, std::move(std)};
}

inline ReparamSample reparam_sample(const Vector& mean, const Vector& log_var, RngStream& rng) {
  Vector eps(mean.size());
  for (Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
  return reparam_with_noise(mean, log_var, eps);
}

inline ReparamSample reparam_sample(const Vector& mean, const Vector& log_var,
                                    std::uint64_t seed) {
  RngStream rng(seed, StreamId::noise);
  return reparam_sample(mean, log_var, rng);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(Index n, AdamConfig cfg)
      : config(cfg), m(Vector::Zero(n)), v(Vector::Zero(n)) {}

  AdamConfig config;
  Vector m;
  Vector v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& state, Vector& params, const Vector& grads) {
  if (params.size() != state.m.size() || grads.size() != state.m.size()) {
    throw InvalidInput("adam_step: state has " + std::to_string(state.m.size()) +
                       " entries, parameters " + std::to_string(params.size()) +
                       ", gradients " + std::to_string(grads.size()));
  }
  const AdamConfig& c = state.config;
  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -=
      c.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace relreg
