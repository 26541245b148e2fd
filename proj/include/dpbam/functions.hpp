#pragma once

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "dpbam/dual.hpp"
#include "dpbam/errors.hpp"
#include "dpbam/graph.hpp"
#include "dpbam/param.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

namespace detail {

// Insert one differentiable leaf per layout block. For the dual graph the
// leaf tangents carry the direction v, which is what turns a reverse sweep
// into a Hessian-vector product.
template <class S>
std::vector<Val<S>> make_param_leaves(Graph<S>& g, const ParamVector& theta,
                                      const ParamVector* tangent) {
  std::vector<Val<S>> leaves;
  const ParamLayout& layout = *theta.layout();
  leaves.reserve(layout.blocks().size());
  for (const ParamBlock& b : layout.blocks()) {
    std::vector<S> vals(b.size);
    std::span<const double> primal = theta.block_values(b);
    if (tangent) {
      std::span<const double> tan = tangent->block_values(b);
      for (std::size_t i = 0; i < b.size; ++i) vals[i] = S(Dual(primal[i], tan[i]));
    } else {
      for (std::size_t i = 0; i < b.size; ++i) vals[i] = S(primal[i]);
    }
    leaves.push_back(g.leaf(TensorT<S>(b.shape, std::move(vals))));
  }
  return leaves;
}

template <>
inline std::vector<Val<double>> make_param_leaves<double>(Graph<double>& g,
                                                          const ParamVector& theta,
                                                          const ParamVector*) {
  std::vector<Val<double>> leaves;
  const ParamLayout& layout = *theta.layout();
  leaves.reserve(layout.blocks().size());
  for (const ParamBlock& b : layout.blocks()) {
    std::span<const double> primal = theta.block_values(b);
    leaves.push_back(
        g.leaf(Tensor(b.shape, std::vector<double>(primal.begin(), primal.end()))));
  }
  return leaves;
}

// Flatten leaf adjoints back into a ParamVector; leaves never reached by the
// backward sweep contribute zeros.
template <class S, class Extract>
ParamVector collect_leaf_adjoints(const Graph<S>& g, std::span<const Val<S>> leaves,
                                  const ParamVector& theta, Extract extract) {
  ParamVector out = ParamVector::zeros(theta.layout());
  const auto& blocks = theta.layout()->blocks();
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const std::vector<S>& adj = g.adjoint(leaves[bi]);
    if (adj.empty()) continue;
    for (std::size_t i = 0; i < blocks[bi].size; ++i) {
      double v = extract(adj[i]);
      if (!std::isfinite(v))
        throw NumericError("non-finite gradient entry in block '" + blocks[bi].name + "'");
      out[blocks[bi].offset + i] = v;
    }
  }
  return out;
}

}  // namespace detail

// A twice-differentiable scalar map of the parameters. Constructed from a
// generic functor that emits the computation onto any Graph<S>; the same
// functor instantiated at S = double drives values and reverse-mode
// gradients, and at S = Dual drives directional derivatives and
// forward-over-reverse Hessian-vector products.
class ScalarFunction {
 public:
  template <class F>
  ScalarFunction(std::shared_ptr<const ParamLayout> layout, F f)
      : layout_(std::move(layout)), real_(f), dual_(std::move(f)) {}

  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }

  Val<double> emit(Graph<double>& g, std::span<const Val<double>> params) const {
    return real_(g, params);
  }
  Val<Dual> emit(Graph<Dual>& g, std::span<const Val<Dual>> params) const {
    return dual_(g, params);
  }

  double value(const ParamVector& theta) const {
    check_theta(theta);
    Graph<double> g;
    auto leaves = detail::make_param_leaves<double>(g, theta, nullptr);
    return g.scalar_value(real_(g, leaves));
  }

  void check_theta(const ParamVector& theta) const {
    if (theta.dim() != layout_->dim())
      throw ContractError("ScalarFunction: parameter dimension mismatch");
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::function<Val<double>(Graph<double>&, std::span<const Val<double>>)> real_;
  std::function<Val<Dual>(Graph<Dual>&, std::span<const Val<Dual>>)> dual_;
};

struct ValueGrad {
  double value = 0.0;
  ParamVector grad;
};

// Reverse-mode gradient of f at theta. Pure: theta is not modified.
inline ValueGrad value_and_grad(const ScalarFunction& f, const ParamVector& theta) {
  f.check_theta(theta);
  Graph<double> g;
  auto leaves = detail::make_param_leaves<double>(g, theta, nullptr);
  Val<double> out = f.emit(g, leaves);
  double value = g.scalar_value(out);
  g.backward(out);
  ParamVector grad =
      detail::collect_leaf_adjoints<double>(g, leaves, theta, [](double a) { return a; });
  return {value, std::move(grad)};
}

inline ParamVector grad(const ScalarFunction& f, const ParamVector& theta) {
  return value_and_grad(f, theta).grad;
}

struct JvpResult {
  double value = 0.0;        // f(theta)
  double directional = 0.0;  // <grad f(theta), v>
};

// Forward-mode directional derivative; a single dual-number evaluation.
inline JvpResult jvp(const ScalarFunction& f, const ParamVector& theta, const ParamVector& v) {
  f.check_theta(theta);
  if (v.dim() != theta.dim()) throw ContractError("jvp: direction dimension mismatch");
  Graph<Dual> g;
  auto leaves = detail::make_param_leaves<Dual>(g, theta, &v);
  Dual out = g.scalar_value(f.emit(g, leaves));
  return {out.v, out.t};
}

struct HvpResult {
  double value = 0.0;
  ParamVector grad;  // primal lane of the dual reverse sweep
  ParamVector hvp;   // tangent lane: (grad^2 f) v
};

// Hessian-vector product via forward-over-reverse: one reverse sweep on dual
// numbers whose tangents carry v. Cost is a constant factor over a gradient
// and the d x d Hessian is never materialized.
inline HvpResult hvp_full(const ScalarFunction& f, const ParamVector& theta,
                          const ParamVector& v) {
  f.check_theta(theta);
  if (v.dim() != theta.dim()) throw ContractError("hvp: direction dimension mismatch");
  Graph<Dual> g;
  auto leaves = detail::make_param_leaves<Dual>(g, theta, &v);
  Val<Dual> out = f.emit(g, leaves);
  Dual value = g.scalar_value(out);
  g.backward(out);
  HvpResult r;
  r.value = value.v;
  r.grad = detail::collect_leaf_adjoints<Dual>(g, leaves, theta,
                                               [](const Dual& a) { return a.v; });
  r.hvp = detail::collect_leaf_adjoints<Dual>(g, leaves, theta,
                                              [](const Dual& a) { return a.t; });
  return r;
}

inline ParamVector hvp(const ScalarFunction& f, const ParamVector& theta, const ParamVector& v) {
  return hvp_full(f, theta, v).hvp;
}

// Per-sample loss family L(theta; x, y), the unit the private oracle clips.
class SampleLossFunction {
 public:
  template <class F>
  SampleLossFunction(std::shared_ptr<const ParamLayout> layout, F f)
      : layout_(std::move(layout)), real_(f), dual_(std::move(f)) {}

  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }

  Val<double> emit(Graph<double>& g, std::span<const Val<double>> params, const Tensor& x,
                   const Tensor& y) const {
    return real_(g, params, x, y);
  }
  Val<Dual> emit(Graph<Dual>& g, std::span<const Val<Dual>> params, const Tensor& x,
                 const Tensor& y) const {
    return dual_(g, params, x, y);
  }

  // Bind one sample, yielding an ordinary scalar function of theta.
  ScalarFunction bind(Tensor x, Tensor y) const {
    auto real = real_;
    auto dual = dual_;
    auto xs = std::make_shared<Tensor>(std::move(x));
    auto ys = std::make_shared<Tensor>(std::move(y));
    struct Bound {
      std::function<Val<double>(Graph<double>&, std::span<const Val<double>>, const Tensor&,
                                const Tensor&)>
          real;
      std::function<Val<Dual>(Graph<Dual>&, std::span<const Val<Dual>>, const Tensor&,
                              const Tensor&)>
          dual;
      std::shared_ptr<Tensor> x, y;
      Val<double> operator()(Graph<double>& g, std::span<const Val<double>> p) const {
        return real(g, p, *x, *y);
      }
      Val<Dual> operator()(Graph<Dual>& g, std::span<const Val<Dual>> p) const {
        return dual(g, p, *x, *y);
      }
    };
    return ScalarFunction(layout_, Bound{real, dual, xs, ys});
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  std::function<Val<double>(Graph<double>&, std::span<const Val<double>>, const Tensor&,
                            const Tensor&)>
      real_;
  std::function<Val<Dual>(Graph<Dual>&, std::span<const Val<Dual>>, const Tensor&, const Tensor&)>
      dual_;
};

// l x d matrix of per-sample gradients plus their L2 norms and losses.
struct PerSampleGradients {
  Tensor grads;                // shape (l, d)
  std::vector<double> norms;   // ||g_i||_2
  std::vector<double> losses;  // per-sample loss values
  std::size_t batch_size = 0;
  std::shared_ptr<const ParamLayout> layout;

  std::size_t dim() const { return layout ? layout->dim() : 0; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(grads.values()).subspan(i * dim(), dim());
  }

  // Left-to-right mean of the rows (zero vector when the batch is empty).
  ParamVector row_mean() const {
    ParamVector m = ParamVector::zeros(layout);
    for (std::size_t i = 0; i < batch_size; ++i) {
      std::span<const double> r = row(i);
      for (std::size_t j = 0; j < r.size(); ++j) m[j] += r[j];
    }
    if (batch_size > 0)
      for (std::size_t j = 0; j < m.dim(); ++j) m[j] /= static_cast<double>(batch_size);
    return m;
  }
};

inline Tensor tensor_row(const Tensor& t, std::size_t i) {
  if (t.rank() == 1) return Tensor::scalar(t[i]);
  return t.row(i);
}

// Gradient of the single-sample loss at theta, one row per sample. Rows are
// produced in batch order by replaying the tape per sample; reductions stay
// deterministic regardless of any future parallel schedule because each
// sample owns its row.
inline PerSampleGradients per_sample_grads(const SampleLossFunction& loss,
                                           const ParamVector& theta, const Tensor& X,
                                           const Tensor& Y) {
  if (X.rank() != 2) throw ContractError("per_sample_grads: X must have shape (l, input_dim)");
  std::size_t l = X.dim(0);
  if ((Y.rank() == 1 && Y.dim(0) != l) || (Y.rank() == 2 && Y.dim(0) != l))
    throw ContractError("per_sample_grads: X/Y row count mismatch");
  std::size_t d = theta.dim();
  PerSampleGradients out;
  out.grads = Tensor({l, d});
  out.norms.resize(l);
  out.losses.resize(l);
  out.batch_size = l;
  out.layout = theta.layout();
  Graph<double> g;
  for (std::size_t i = 0; i < l; ++i) {
    g.clear();
    auto leaves = detail::make_param_leaves<double>(g, theta, nullptr);
    Val<double> o = loss.emit(g, leaves, tensor_row(X, i), tensor_row(Y, i));
    out.losses[i] = g.scalar_value(o);
    g.backward(o);
    double* row = out.grads.data() + i * d;
    const auto& blocks = theta.layout()->blocks();
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const std::vector<double>& adj = g.adjoint(leaves[bi]);
      if (adj.empty()) continue;
      for (std::size_t j = 0; j < blocks[bi].size; ++j) row[blocks[bi].offset + j] = adj[j];
    }
    out.norms[i] = l2_norm(std::span<const double>(row, d));
  }
  return out;
}

}  // namespace dpbam
