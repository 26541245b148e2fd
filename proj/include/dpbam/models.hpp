#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dpbam/errors.hpp"
#include "dpbam/functions.hpp"
#include "dpbam/graph.hpp"
#include "dpbam/param.hpp"
#include "dpbam/rng.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

enum class Activation { relu, tanh };
enum class LossKind { cross_entropy_softmax, mse };

// Fully-connected classifier. widths() chains input, hidden layers and the
// K output logits; hidden may be empty (linear model).
struct ModelSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t classes = 2;  // K >= 2
  Activation activation = Activation::tanh;
  std::uint64_t init_seed = 0;

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w;
    w.push_back(input_dim);
    for (std::size_t h : hidden) w.push_back(h);
    w.push_back(classes);
    return w;
  }

  void validate() const {
    if (classes < 2) throw ContractError("ModelSpec: classes must be >= 2");
    for (std::size_t w : widths())
      if (w == 0) throw ContractError("ModelSpec: zero-width layer");
  }
};

inline std::size_t param_count(const ModelSpec& spec) {
  spec.validate();
  auto w = spec.widths();
  std::size_t d = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) d += w[i] * w[i + 1] + w[i + 1];
  return d;
}

inline std::shared_ptr<const ParamLayout> layout_for(const ModelSpec& spec) {
  spec.validate();
  auto w = spec.widths();
  std::vector<ParamBlock> blocks;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    blocks.push_back({"W" + std::to_string(i), {w[i + 1], w[i]}});
    blocks.push_back({"b" + std::to_string(i), {w[i + 1]}});
  }
  return std::make_shared<const ParamLayout>(std::move(blocks));
}

// Deterministic fan-in-scaled Gaussian weights (variance 2/fan_in) and zero
// biases; identical seeds give bit-identical parameters.
inline ParamVector init_model(const ModelSpec& spec) {
  auto layout = layout_for(spec);
  ParamVector theta = ParamVector::zeros(layout);
  std::size_t layer = 0;
  for (const ParamBlock& b : layout->blocks()) {
    if (b.shape.size() == 2) {
      double stddev = std::sqrt(2.0 / static_cast<double>(b.shape[1]));
      RngStream rng(spec.init_seed, 0, RngPurpose::model_init, layer);
      for (std::size_t i = 0; i < b.size; ++i) theta[b.offset + i] = stddev * rng.next_gauss();
      ++layer;
    }
    // bias blocks stay zero
  }
  return theta;
}

namespace detail {

// Logits of one sample; params alternate W_i, b_i per layout_for.
template <class S>
Val<S> emit_logits(Graph<S>& g, const ModelSpec& spec, std::span<const Val<S>> params,
                   Val<S> x) {
  std::size_t layers = spec.hidden.size() + 1;
  Val<S> h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    h = g.affine(params[2 * i], params[2 * i + 1], h);
    if (i + 1 < layers)
      h = (spec.activation == Activation::tanh) ? g.tanh(h) : g.relu(h);
  }
  return h;
}

// Batched variant: X (l, input_dim) -> logits (l, K).
template <class S>
Val<S> emit_logits_batch(Graph<S>& g, const ModelSpec& spec, std::span<const Val<S>> params,
                         Val<S> X) {
  std::size_t layers = spec.hidden.size() + 1;
  Val<S> h = X;
  for (std::size_t i = 0; i < layers; ++i) {
    h = g.affine_batch(params[2 * i], params[2 * i + 1], h);
    if (i + 1 < layers)
      h = (spec.activation == Activation::tanh) ? g.tanh(h) : g.relu(h);
  }
  return h;
}

inline int label_of(const Tensor& y, std::size_t classes) {
  if (y.size() != 1) throw ContractError("expected a scalar class label");
  double v = y[0];
  long lab = std::lround(v);
  if (static_cast<double>(lab) != v || lab < 0 || static_cast<std::size_t>(lab) >= classes)
    throw ContractError("label out of range [0, K)");
  return static_cast<int>(lab);
}

inline Tensor one_hot(int label, std::size_t classes) {
  Tensor t({classes});
  t[static_cast<std::size_t>(label)] = 1.0;
  return t;
}

template <class S>
Val<S> emit_sample_loss(Graph<S>& g, const ModelSpec& spec, LossKind kind,
                        std::span<const Val<S>> params, const Tensor& x, const Tensor& y) {
  if (x.size() != spec.input_dim) throw ContractError("sample does not match model input_dim");
  Val<S> logits = emit_logits(g, spec, params, g.constant(x));
  if (kind == LossKind::cross_entropy_softmax)
    return g.softmax_cross_entropy(logits, {label_of(y, spec.classes)});
  // MSE against a one-hot target (or an explicit K-vector target).
  Tensor target = (y.size() == spec.classes) ? y : one_hot(label_of(y, spec.classes), spec.classes);
  return g.mse(logits, g.constant(target));
}

}  // namespace detail

// Per-sample loss family L(theta; x, y).
inline SampleLossFunction make_sample_loss(const ModelSpec& spec, LossKind kind) {
  spec.validate();
  return SampleLossFunction(
      layout_for(spec), [spec, kind](auto& g, auto params, const Tensor& x, const Tensor& y) {
        return detail::emit_sample_loss(g, spec, kind, params, x, y);
      });
}

// Loss of theta on one fixed sample.
inline ScalarFunction make_loss(const ModelSpec& spec, LossKind kind, Tensor x, Tensor y) {
  return make_sample_loss(spec, kind).bind(std::move(x), std::move(y));
}

// Mean loss of theta over a fixed batch, evaluated with batched primitives.
inline ScalarFunction make_batch_loss(const ModelSpec& spec, LossKind kind, Tensor X, Tensor Y) {
  spec.validate();
  if (X.rank() != 2 || X.dim(1) != spec.input_dim)
    throw ContractError("make_batch_loss: X must have shape (l, input_dim)");
  std::size_t l = X.dim(0);
  if (l == 0) throw ContractError("make_batch_loss: empty batch");
  std::vector<int> labels;
  Tensor targets;
  if (kind == LossKind::cross_entropy_softmax) {
    labels.reserve(l);
    for (std::size_t i = 0; i < l; ++i)
      labels.push_back(detail::label_of(tensor_row(Y, i), spec.classes));
  } else {
    targets = Tensor({l, spec.classes});
    for (std::size_t i = 0; i < l; ++i) {
      Tensor row = tensor_row(Y, i);
      Tensor t = (row.size() == spec.classes)
                     ? row
                     : detail::one_hot(detail::label_of(row, spec.classes), spec.classes);
      for (std::size_t k = 0; k < spec.classes; ++k) targets(i, k) = t[k];
    }
  }
  auto Xs = std::make_shared<Tensor>(std::move(X));
  auto Ts = std::make_shared<Tensor>(std::move(targets));
  return ScalarFunction(layout_for(spec),
                        [spec, kind, Xs, Ts, labels](auto& g, auto params) {
                          auto logits = detail::emit_logits_batch(g, spec, params, g.constant(*Xs));
                          if (kind == LossKind::cross_entropy_softmax)
                            return g.mean(g.softmax_cross_entropy(logits, labels));
                          return g.mse(logits, g.constant(*Ts));
                        });
}

// Plain forward pass for evaluation; no tape bookkeeping needed beyond the
// graph itself.
inline Tensor logits_batch(const ModelSpec& spec, const ParamVector& theta, const Tensor& X) {
  Graph<double> g;
  auto leaves = detail::make_param_leaves<double>(g, theta, nullptr);
  Val<double> out = detail::emit_logits_batch<double>(g, spec, leaves, g.constant(X));
  return Tensor(g.shape(out), g.value(out));
}

inline double accuracy(const ModelSpec& spec, const ParamVector& theta, const Tensor& X,
                       const Tensor& Y) {
  if (X.dim(0) == 0) return 0.0;
  Tensor logits = logits_batch(spec, theta, X);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < X.dim(0); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < spec.classes; ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    if (static_cast<int>(best) == detail::label_of(tensor_row(Y, i), spec.classes)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(X.dim(0));
}

}  // namespace dpbam
