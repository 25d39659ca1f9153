#pragma once
// Layer primitives with hand-written gradients: 1-D convolution over token
// rows, max pooling, a dense output layer, softmax and an Adam optimizer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "diamat/common.hpp"
#include "diamat/tensor.hpp"

namespace diamat::nn {

// One filter bank of a single width. Filter c reads `width` consecutive
// rows flattened into a vector of width * dim values.
struct ConvBank {
  std::size_t width = 0;
  Matrix weights;  // filters x (width * dim)
  std::vector<double> bias;

  std::size_t filters() const { return weights.rows(); }
  std::size_t dim() const { return width == 0 ? 0 : weights.cols() / width; }

  bool operator==(const ConvBank&) const = default;
};

struct ConvLayer {
  std::vector<ConvBank> banks;

  std::size_t channels() const {
    std::size_t n = 0;
    for (const auto& b : banks) n += b.filters();
    return n;
  }
  bool operator==(const ConvLayer&) const = default;
};

struct DenseLayer {
  Matrix weights;  // outputs x inputs
  std::vector<double> bias;

  std::size_t inputs() const { return weights.cols(); }
  std::size_t outputs() const { return weights.rows(); }
  bool operator==(const DenseLayer&) const = default;
};

// Pre-activations and ReLU outputs, positions x filters.
struct FeatureMap {
  Matrix pre;
  Matrix post;
};

// Convolves `input` (rows = token positions) with every filter of `bank`.
// Positions whose window starts at or after `valid_length` see only zero
// padding; their pre-activation is the bias and is filled in without a
// dot product.
inline FeatureMap conv1d_forward(const Matrix& input, std::size_t valid_length, const ConvBank& bank) {
  const std::size_t w = bank.width;
  if (w == 0 || input.cols() * w != bank.weights.cols())
    throw ConfigError("conv1d: input width " + std::to_string(input.cols()) + " does not match filter width " +
                      std::to_string(w) + " x dim " + std::to_string(bank.dim()));
  if (w > input.rows())
    throw ConfigError("conv1d: filter width " + std::to_string(w) + " exceeds sequence length " +
                      std::to_string(input.rows()));
  if (bank.bias.size() != bank.filters()) throw ConfigError("conv1d: bias length does not match filter count");

  const std::size_t positions = input.rows() - w + 1;
  const std::size_t filters = bank.filters();
  FeatureMap fm{Matrix(positions, filters), Matrix(positions, filters)};
  const std::size_t computed = std::min(positions, valid_length);
  for (std::size_t t = 0; t < positions; ++t) {
    const auto window = input.rows_flat(t, w);
    for (std::size_t c = 0; c < filters; ++c) {
      const double z = t < computed ? dot(bank.weights.row(c), window) + bank.bias[c] : bank.bias[c];
      fm.pre(t, c) = z;
      fm.post(t, c) = z > 0.0 ? z : 0.0;
    }
  }
  return fm;
}

inline FeatureMap conv1d_forward(const Matrix& input, const ConvBank& bank) {
  return conv1d_forward(input, input.rows(), bank);
}

struct Pooled {
  std::vector<double> values;
  std::vector<std::size_t> argmax;
};

// Column-wise maximum; ties go to the lowest position.
inline Pooled max_pool(const Matrix& map) {
  if (map.rows() == 0) throw ConfigError("max_pool: empty feature map");
  Pooled p{std::vector<double>(map.row(0).begin(), map.row(0).end()), std::vector<std::size_t>(map.cols(), 0)};
  for (std::size_t t = 1; t < map.rows(); ++t) {
    for (std::size_t c = 0; c < map.cols(); ++c) {
      if (map(t, c) > p.values[c]) {
        p.values[c] = map(t, c);
        p.argmax[c] = t;
      }
    }
  }
  return p;
}

inline std::vector<double> dense_forward(std::span<const double> features, const DenseLayer& layer) {
  if (features.size() != layer.inputs())
    throw ConfigError("dense: feature length " + std::to_string(features.size()) + " does not match weight shape " +
                      std::to_string(layer.outputs()) + "x" + std::to_string(layer.inputs()));
  std::vector<double> out(layer.outputs());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = dot(layer.weights.row(j), features) + layer.bias[j];
  return out;
}

// Accumulates dense gradients for upstream gradient `dout` and returns the
// gradient with respect to the features.
inline std::vector<double> dense_backward(std::span<const double> features, std::span<const double> dout,
                                          const DenseLayer& layer, DenseLayer& grad) {
  std::vector<double> dfeatures(layer.inputs(), 0.0);
  for (std::size_t j = 0; j < layer.outputs(); ++j) {
    const double g = dout[j];
    if (g == 0.0) continue;
    grad.bias[j] += g;
    auto gw = grad.weights.row(j);
    const auto w = layer.weights.row(j);
    for (std::size_t i = 0; i < features.size(); ++i) {
      gw[i] += g * features[i];
      dfeatures[i] += g * w[i];
    }
  }
  return dfeatures;
}

// Gradient of one filter's output at position t (already ReLU-masked by the
// caller) into the bank's weights and bias. Returns nothing for the input;
// embeddings are frozen.
inline void conv_backward_at(const Matrix& input, std::size_t t, std::size_t filter, double dout,
                             ConvBank& grad) {
  const auto window = input.rows_flat(t, grad.width);
  auto gw = grad.weights.row(filter);
  for (std::size_t k = 0; k < window.size(); ++k) gw[k] += dout * window[k];
  grad.bias[filter] += dout;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) m = std::max(m, z);
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

// -log softmax(logits)[label], computed with the log-sum-exp shift.
inline double cross_entropy(std::span<const double> logits, std::size_t label) {
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) m = std::max(m, z);
  double total = 0.0;
  for (double z : logits) total += std::exp(z - m);
  return std::log(total) + m - logits[label];
}

// Zero-valued copies with matching shapes.
inline ConvBank zeros_like(const ConvBank& b) {
  return {b.width, Matrix(b.weights.rows(), b.weights.cols()), std::vector<double>(b.bias.size(), 0.0)};
}
inline ConvLayer zeros_like(const ConvLayer& l) {
  ConvLayer z;
  for (const auto& b : l.banks) z.banks.push_back(zeros_like(b));
  return z;
}
inline DenseLayer zeros_like(const DenseLayer& l) {
  return {Matrix(l.weights.rows(), l.weights.cols()), std::vector<double>(l.bias.size(), 0.0)};
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

// First and second moments, one buffer per parameter array.
struct AdamState {
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t step = 0;
};

inline double global_norm(const std::vector<std::span<double>>& grads) {
  double s = 0.0;
  for (auto g : grads)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

// One bias-corrected Adam update. `params` and `grads` list the parameter
// arrays in the same order on every call.
inline void adam_step(const std::vector<std::span<double>>& params, const std::vector<std::span<double>>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw ConfigError("adam: parameter/gradient array count mismatch");
  if (state.first.empty()) {
    for (auto p : params) {
      state.first.emplace_back(p.size(), 0.0);
      state.second.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first.size() != params.size()) throw ConfigError("adam: optimizer state does not match parameters");

  double scale = 1.0;
  if (cfg.clip_norm > 0.0) {
    const double norm = global_norm(grads);
    if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t a = 0; a < params.size(); ++a) {
    auto p = params[a];
    auto g = grads[a];
    auto& m = state.first[a];
    auto& v = state.second[a];
    if (m.size() != p.size() || g.size() != p.size()) throw ConfigError("adam: array shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      p[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
    }
  }
}

}  // namespace diamat::nn
