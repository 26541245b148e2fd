#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpbam/dual.hpp"
#include "dpbam/errors.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

enum class OpKind : std::uint8_t {
  leaf,
  constant,
  add,
  sub,
  mul,
  neg,
  scale,
  affine,
  affine_batch,
  matvec,
  dot,
  sum,
  mean,
  tanh_act,
  relu_act,
  exp_map,
  log_map,
  softmax_ce,
  mse,
};

inline const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::neg: return "neg";
    case OpKind::scale: return "scale";
    case OpKind::affine: return "affine";
    case OpKind::affine_batch: return "affine_batch";
    case OpKind::matvec: return "matvec";
    case OpKind::dot: return "dot";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::tanh_act: return "tanh";
    case OpKind::relu_act: return "relu";
    case OpKind::exp_map: return "exp";
    case OpKind::log_map: return "log";
    case OpKind::softmax_ce: return "softmax_cross_entropy";
    case OpKind::mse: return "mse";
  }
  return "unknown";
}

namespace detail {
template <class S>
S generic_tanh(const S& x) {
  using std::tanh;
  return tanh(x);
}
template <class S>
S generic_exp(const S& x) {
  using std::exp;
  return exp(x);
}
template <class S>
S generic_log(const S& x) {
  using std::log;
  return log(x);
}
}  // namespace detail

// Handle to a node of a Graph<S>.
template <class S>
struct Val {
  std::int32_t id = -1;
};

// Record-and-replay reverse-mode tape over dense tensor operations. The
// scalar type S is double for plain gradients and Dual for
// forward-over-reverse Hessian-vector products: running the identical tape
// on duals differentiates the whole gradient computation in one direction.
//
// Nodes are recorded in evaluation order, so reverse iteration is a valid
// topological order for the backward sweep. All reductions run
// left-to-right, which keeps repeated runs bit-identical.
template <class S>
class Graph {
 public:
  using scalar_type = S;

  explicit Graph(bool check_finite = true) : check_finite_(check_finite) {}

  void clear() { nodes_.clear(); }
  std::size_t num_nodes() const { return nodes_.size(); }

  Val<S> leaf(TensorT<S> t) {
    Node n;
    n.op = OpKind::leaf;
    n.shape = t.shape();
    n.value.assign(t.values().begin(), t.values().end());
    n.needs_grad = true;
    return push(std::move(n));
  }

  Val<S> constant(const Tensor& t) {
    Node n;
    n.op = OpKind::constant;
    n.shape = t.shape();
    n.value.reserve(t.size());
    for (double v : t.values()) n.value.push_back(S(v));
    n.needs_grad = false;
    return push(std::move(n));
  }

  Val<S> constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  Val<S> add(Val<S> a, Val<S> b) { return elementwise_binary(OpKind::add, a, b); }
  Val<S> sub(Val<S> a, Val<S> b) { return elementwise_binary(OpKind::sub, a, b); }
  Val<S> mul(Val<S> a, Val<S> b) { return elementwise_binary(OpKind::mul, a, b); }

  Val<S> neg(Val<S> a) {
    Node n = unary_like(OpKind::neg, a);
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = -x[i];
    return push(std::move(n));
  }

  Val<S> scale(Val<S> a, double k) {
    Node n = unary_like(OpKind::scale, a);
    n.attr = k;
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = S(k) * x[i];
    return push(std::move(n));
  }

  Val<S> tanh(Val<S> a) {
    Node n = unary_like(OpKind::tanh_act, a);
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = detail::generic_tanh(x[i]);
    return push(std::move(n));
  }

  // ReLU with subgradient 0 at exactly 0.
  Val<S> relu(Val<S> a) {
    Node n = unary_like(OpKind::relu_act, a);
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = value_of(x[i]) > 0.0 ? x[i] : S(0.0);
    return push(std::move(n));
  }

  Val<S> exp(Val<S> a) {
    Node n = unary_like(OpKind::exp_map, a);
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = detail::generic_exp(x[i]);
    return push(std::move(n));
  }

  Val<S> log(Val<S> a) {
    Node n = unary_like(OpKind::log_map, a);
    const auto& x = node(a).value;
    for (std::size_t i = 0; i < x.size(); ++i) n.value[i] = detail::generic_log(x[i]);
    return push(std::move(n));
  }

  // W (out,in), b (out), x (in) -> W x + b, shape (out).
  Val<S> affine(Val<S> w, Val<S> b, Val<S> x) {
    const Node& wn = node(w);
    const Node& bn = node(b);
    const Node& xn = node(x);
    if (wn.shape.size() != 2 || bn.shape.size() != 1 || xn.shape.size() != 1)
      throw ContractError("affine: expected W (out,in), b (out), x (in)");
    std::size_t out = wn.shape[0], in = wn.shape[1];
    if (bn.shape[0] != out || xn.shape[0] != in)
      throw ContractError("affine: dimension mismatch");
    Node n;
    n.op = OpKind::affine;
    n.a = w.id;
    n.b = b.id;
    n.c = x.id;
    n.shape = {out};
    n.value.resize(out);
    n.needs_grad = wn.needs_grad || bn.needs_grad || xn.needs_grad;
    for (std::size_t o = 0; o < out; ++o) {
      S acc = bn.value[o];
      const S* wrow = wn.value.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * xn.value[i];
      n.value[o] = acc;
    }
    return push(std::move(n));
  }

  // W (out,in), b (out), X (l,in) -> X W^T + b, shape (l,out).
  Val<S> affine_batch(Val<S> w, Val<S> b, Val<S> x) {
    const Node& wn = node(w);
    const Node& bn = node(b);
    const Node& xn = node(x);
    if (wn.shape.size() != 2 || bn.shape.size() != 1 || xn.shape.size() != 2)
      throw ContractError("affine_batch: expected W (out,in), b (out), X (l,in)");
    std::size_t out = wn.shape[0], in = wn.shape[1], rows = xn.shape[0];
    if (bn.shape[0] != out || xn.shape[1] != in)
      throw ContractError("affine_batch: dimension mismatch");
    Node n;
    n.op = OpKind::affine_batch;
    n.a = w.id;
    n.b = b.id;
    n.c = x.id;
    n.shape = {rows, out};
    n.value.resize(rows * out);
    n.needs_grad = wn.needs_grad || bn.needs_grad || xn.needs_grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const S* xrow = xn.value.data() + r * in;
      S* yrow = n.value.data() + r * out;
      for (std::size_t o = 0; o < out; ++o) {
        S acc = bn.value[o];
        const S* wrow = wn.value.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * xrow[i];
        yrow[o] = acc;
      }
    }
    return push(std::move(n));
  }

  // A (m,n), x (n) -> A x, shape (m).
  Val<S> matvec(Val<S> a, Val<S> x) {
    const Node& an = node(a);
    const Node& xn = node(x);
    if (an.shape.size() != 2 || xn.shape.size() != 1 || an.shape[1] != xn.shape[0])
      throw ContractError("matvec: dimension mismatch");
    std::size_t m = an.shape[0], k = an.shape[1];
    Node n;
    n.op = OpKind::matvec;
    n.a = a.id;
    n.b = x.id;
    n.shape = {m};
    n.value.resize(m);
    n.needs_grad = an.needs_grad || xn.needs_grad;
    for (std::size_t r = 0; r < m; ++r) {
      S acc = S(0.0);
      const S* arow = an.value.data() + r * k;
      for (std::size_t i = 0; i < k; ++i) acc += arow[i] * xn.value[i];
      n.value[r] = acc;
    }
    return push(std::move(n));
  }

  Val<S> dot(Val<S> a, Val<S> b) {
    const Node& an = node(a);
    const Node& bn = node(b);
    if (an.value.size() != bn.value.size()) throw ContractError("dot: length mismatch");
    Node n;
    n.op = OpKind::dot;
    n.a = a.id;
    n.b = b.id;
    n.shape = {};
    n.needs_grad = an.needs_grad || bn.needs_grad;
    S acc = S(0.0);
    for (std::size_t i = 0; i < an.value.size(); ++i) acc += an.value[i] * bn.value[i];
    n.value = {acc};
    return push(std::move(n));
  }

  Val<S> sum(Val<S> a) { return reduce(OpKind::sum, a); }
  Val<S> mean(Val<S> a) { return reduce(OpKind::mean, a); }

  // Numerically stable fused softmax + cross-entropy with integer labels.
  // logits (K) with one label -> scalar loss; logits (l,K) with l labels ->
  // per-sample losses of shape (l).
  Val<S> softmax_cross_entropy(Val<S> logits, std::vector<int> labels) {
    const Node& ln = node(logits);
    std::size_t rows, classes;
    if (ln.shape.size() == 1) {
      rows = 1;
      classes = ln.shape[0];
    } else if (ln.shape.size() == 2) {
      rows = ln.shape[0];
      classes = ln.shape[1];
    } else {
      throw ContractError("softmax_cross_entropy: logits must be rank 1 or 2");
    }
    if (labels.size() != rows)
      throw ContractError("softmax_cross_entropy: label count mismatch");
    for (int y : labels)
      if (y < 0 || static_cast<std::size_t>(y) >= classes)
        throw ContractError("softmax_cross_entropy: label out of range [0, K)");
    Node n;
    n.op = OpKind::softmax_ce;
    n.a = logits.id;
    n.labels = std::move(labels);
    n.shape = (ln.shape.size() == 1) ? std::vector<std::size_t>{} : std::vector<std::size_t>{rows};
    n.value.resize(rows);
    n.needs_grad = ln.needs_grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const S* z = ln.value.data() + r * classes;
      S zmax = z[0];
      for (std::size_t k = 1; k < classes; ++k)
        if (value_of(z[k]) > value_of(zmax)) zmax = z[k];
      S acc = S(0.0);
      for (std::size_t k = 0; k < classes; ++k) acc += detail::generic_exp(z[k] - zmax);
      S lse = zmax + detail::generic_log(acc);
      n.value[r] = lse - z[static_cast<std::size_t>(n.labels[r])];
    }
    return push(std::move(n));
  }

  // Mean squared error over all elements; pred and target must agree in
  // shape. Scalar output regardless of input rank.
  Val<S> mse(Val<S> pred, Val<S> target) {
    const Node& pn = node(pred);
    const Node& tn = node(target);
    if (pn.value.size() != tn.value.size()) throw ContractError("mse: shape mismatch");
    if (pn.value.empty()) throw ContractError("mse: empty input");
    Node n;
    n.op = OpKind::mse;
    n.a = pred.id;
    n.b = target.id;
    n.shape = {};
    n.needs_grad = pn.needs_grad || tn.needs_grad;
    S acc = S(0.0);
    for (std::size_t i = 0; i < pn.value.size(); ++i) {
      S d = pn.value[i] - tn.value[i];
      acc += d * d;
    }
    n.value = {acc / S(static_cast<double>(pn.value.size()))};
    return push(std::move(n));
  }

  const std::vector<std::size_t>& shape(Val<S> v) const { return node(v).shape; }
  const std::vector<S>& value(Val<S> v) const { return node(v).value; }
  S scalar_value(Val<S> v) const {
    if (node(v).value.size() != 1) throw ContractError("scalar_value: node is not scalar");
    return node(v).value[0];
  }
  const std::vector<S>& adjoint(Val<S> v) const { return node(v).adjoint; }

  // Reverse sweep seeding d(out)/d(out) = 1. Leaf adjoints afterwards hold
  // the gradient of the scalar output with respect to each leaf.
  void backward(Val<S> out) {
    Node& on = node(out);
    if (on.value.size() != 1) throw ContractError("backward: output must be scalar");
    touch_adjoint(on);
    on.adjoint[0] = S(1.0);
    for (std::int32_t i = out.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.adjoint.empty()) continue;
      propagate(n);
    }
  }

 private:
  struct Node {
    OpKind op = OpKind::constant;
    std::int32_t a = -1, b = -1, c = -1;
    std::vector<std::size_t> shape;
    std::vector<S> value;
    std::vector<S> adjoint;
    std::vector<int> labels;
    double attr = 0.0;
    bool needs_grad = false;
  };

  Node& node(Val<S> v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  const Node& node(Val<S> v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  Node unary_like(OpKind op, Val<S> a) {
    const Node& an = node(a);
    Node n;
    n.op = op;
    n.a = a.id;
    n.shape = an.shape;
    n.value.resize(an.value.size());
    n.needs_grad = an.needs_grad;
    return n;
  }

  Val<S> elementwise_binary(OpKind op, Val<S> a, Val<S> b) {
    const Node& an = node(a);
    const Node& bn = node(b);
    if (an.shape != bn.shape) throw ContractError(std::string(op_name(op)) + ": shape mismatch");
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.shape = an.shape;
    n.value.resize(an.value.size());
    n.needs_grad = an.needs_grad || bn.needs_grad;
    switch (op) {
      case OpKind::add:
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = an.value[i] + bn.value[i];
        break;
      case OpKind::sub:
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = an.value[i] - bn.value[i];
        break;
      case OpKind::mul:
        for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = an.value[i] * bn.value[i];
        break;
      default:
        throw ContractError("elementwise_binary: bad op");
    }
    return push(std::move(n));
  }

  Val<S> reduce(OpKind op, Val<S> a) {
    const Node& an = node(a);
    if (an.value.empty()) throw ContractError(std::string(op_name(op)) + ": empty input");
    Node n;
    n.op = op;
    n.a = a.id;
    n.shape = {};
    n.needs_grad = an.needs_grad;
    S acc = S(0.0);
    for (const S& v : an.value) acc += v;
    if (op == OpKind::mean) acc = acc / S(static_cast<double>(an.value.size()));
    n.value = {acc};
    return push(std::move(n));
  }

  Val<S> push(Node&& n) {
    if (check_finite_) {
      for (const S& v : n.value) {
        if (!is_finite(v))
          throw NumericError(std::string("non-finite value in ") + op_name(n.op) + " node " +
                             std::to_string(nodes_.size()));
      }
    }
    nodes_.push_back(std::move(n));
    return Val<S>{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  void touch_adjoint(Node& n) {
    if (n.adjoint.empty()) n.adjoint.assign(n.value.size(), S(0.0));
  }

  // Accumulate n's adjoint into its parents.
  void propagate(Node& n) {
    auto parent = [&](std::int32_t id) -> Node& { return nodes_[static_cast<std::size_t>(id)]; };
    auto want = [&](std::int32_t id) {
      return id >= 0 && parent(id).needs_grad;
    };
    switch (n.op) {
      case OpKind::leaf:
      case OpKind::constant:
        break;
      case OpKind::add: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i) p.adjoint[i] += n.adjoint[i];
        }
        if (want(n.b)) {
          Node& p = parent(n.b);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i) p.adjoint[i] += n.adjoint[i];
        }
        break;
      }
      case OpKind::sub: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i) p.adjoint[i] += n.adjoint[i];
        }
        if (want(n.b)) {
          Node& p = parent(n.b);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i) p.adjoint[i] -= n.adjoint[i];
        }
        break;
      }
      case OpKind::mul: {
        Node& pa = parent(n.a);
        Node& pb = parent(n.b);
        if (want(n.a)) {
          touch_adjoint(pa);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i)
            pa.adjoint[i] += n.adjoint[i] * pb.value[i];
        }
        if (want(n.b)) {
          touch_adjoint(pb);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i)
            pb.adjoint[i] += n.adjoint[i] * pa.value[i];
        }
        break;
      }
      case OpKind::neg: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i) p.adjoint[i] -= n.adjoint[i];
        }
        break;
      }
      case OpKind::scale: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i)
            p.adjoint[i] += S(n.attr) * n.adjoint[i];
        }
        break;
      }
      case OpKind::tanh_act: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i)
            p.adjoint[i] += n.adjoint[i] * (S(1.0) - n.value[i] * n.value[i]);
        }
        break;
      }
      case OpKind::relu_act: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i)
            if (value_of(p.value[i]) > 0.0) p.adjoint[i] += n.adjoint[i];
        }
        break;
      }
      case OpKind::exp_map: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i)
            p.adjoint[i] += n.adjoint[i] * n.value[i];
        }
        break;
      }
      case OpKind::log_map: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          for (std::size_t i = 0; i < n.adjoint.size(); ++i)
            p.adjoint[i] += n.adjoint[i] / p.value[i];
        }
        break;
      }
      case OpKind::affine: {
        Node& wn = parent(n.a);
        Node& bn = parent(n.b);
        Node& xn = parent(n.c);
        std::size_t out = wn.shape[0], in = wn.shape[1];
        if (want(n.a)) {
          touch_adjoint(wn);
          for (std::size_t o = 0; o < out; ++o) {
            S* wrow = wn.adjoint.data() + o * in;
            const S g = n.adjoint[o];
            for (std::size_t i = 0; i < in; ++i) wrow[i] += g * xn.value[i];
          }
        }
        if (want(n.b)) {
          touch_adjoint(bn);
          for (std::size_t o = 0; o < out; ++o) bn.adjoint[o] += n.adjoint[o];
        }
        if (want(n.c)) {
          touch_adjoint(xn);
          for (std::size_t o = 0; o < out; ++o) {
            const S* wrow = wn.value.data() + o * in;
            const S g = n.adjoint[o];
            for (std::size_t i = 0; i < in; ++i) xn.adjoint[i] += g * wrow[i];
          }
        }
        break;
      }
      case OpKind::affine_batch: {
        Node& wn = parent(n.a);
        Node& bn = parent(n.b);
        Node& xn = parent(n.c);
        std::size_t out = wn.shape[0], in = wn.shape[1], rows = xn.shape[0];
        if (want(n.a)) {
          touch_adjoint(wn);
          for (std::size_t r = 0; r < rows; ++r) {
            const S* xrow = xn.value.data() + r * in;
            const S* grow = n.adjoint.data() + r * out;
            for (std::size_t o = 0; o < out; ++o) {
              S* wrow = wn.adjoint.data() + o * in;
              const S g = grow[o];
              for (std::size_t i = 0; i < in; ++i) wrow[i] += g * xrow[i];
            }
          }
        }
        if (want(n.b)) {
          touch_adjoint(bn);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out; ++o) bn.adjoint[o] += n.adjoint[r * out + o];
        }
        if (want(n.c)) {
          touch_adjoint(xn);
          for (std::size_t r = 0; r < rows; ++r) {
            S* xrow = xn.adjoint.data() + r * in;
            const S* grow = n.adjoint.data() + r * out;
            for (std::size_t o = 0; o < out; ++o) {
              const S* wrow = wn.value.data() + o * in;
              const S g = grow[o];
              for (std::size_t i = 0; i < in; ++i) xrow[i] += g * wrow[i];
            }
          }
        }
        break;
      }
      case OpKind::matvec: {
        Node& an = parent(n.a);
        Node& xn = parent(n.b);
        std::size_t m = an.shape[0], k = an.shape[1];
        if (want(n.a)) {
          touch_adjoint(an);
          for (std::size_t r = 0; r < m; ++r) {
            S* arow = an.adjoint.data() + r * k;
            const S g = n.adjoint[r];
            for (std::size_t i = 0; i < k; ++i) arow[i] += g * xn.value[i];
          }
        }
        if (want(n.b)) {
          touch_adjoint(xn);
          for (std::size_t r = 0; r < m; ++r) {
            const S* arow = an.value.data() + r * k;
            const S g = n.adjoint[r];
            for (std::size_t i = 0; i < k; ++i) xn.adjoint[i] += g * arow[i];
          }
        }
        break;
      }
      case OpKind::dot: {
        Node& an = parent(n.a);
        Node& bn = parent(n.b);
        const S g = n.adjoint[0];
        if (want(n.a)) {
          touch_adjoint(an);
          for (std::size_t i = 0; i < an.value.size(); ++i) an.adjoint[i] += g * bn.value[i];
        }
        if (want(n.b)) {
          touch_adjoint(bn);
          for (std::size_t i = 0; i < bn.value.size(); ++i) bn.adjoint[i] += g * an.value[i];
        }
        break;
      }
      case OpKind::sum: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          const S g = n.adjoint[0];
          for (std::size_t i = 0; i < p.adjoint.size(); ++i) p.adjoint[i] += g;
        }
        break;
      }
      case OpKind::mean: {
        if (want(n.a)) {
          Node& p = parent(n.a);
          touch_adjoint(p);
          const S g = n.adjoint[0] / S(static_cast<double>(p.value.size()));
          for (std::size_t i = 0; i < p.adjoint.size(); ++i) p.adjoint[i] += g;
        }
        break;
      }
      case OpKind::softmax_ce: {
        if (want(n.a)) {
          Node& zn = parent(n.a);
          touch_adjoint(zn);
          std::size_t rows = n.value.size();
          std::size_t classes = zn.shape.back();
          for (std::size_t r = 0; r < rows; ++r) {
            const S* z = zn.value.data() + r * classes;
            S* zadj = zn.adjoint.data() + r * classes;
            const S g = n.adjoint[r];
            S zmax = z[0];
            for (std::size_t k = 1; k < classes; ++k)
              if (value_of(z[k]) > value_of(zmax)) zmax = z[k];
            S denom = S(0.0);
            for (std::size_t k = 0; k < classes; ++k) denom += detail::generic_exp(z[k] - zmax);
            for (std::size_t k = 0; k < classes; ++k) {
              S p = detail::generic_exp(z[k] - zmax) / denom;
              if (k == static_cast<std::size_t>(n.labels[r])) p = p - S(1.0);
              zadj[k] += g * p;
            }
          }
        }
        break;
      }
      case OpKind::mse: {
        Node& pn = parent(n.a);
        Node& tn = parent(n.b);
        const S g = n.adjoint[0] * S(2.0 / static_cast<double>(pn.value.size()));
        if (want(n.a)) {
          touch_adjoint(pn);
          for (std::size_t i = 0; i < pn.value.size(); ++i)
            pn.adjoint[i] += g * (pn.value[i] - tn.value[i]);
        }
        if (want(n.b)) {
          touch_adjoint(tn);
          for (std::size_t i = 0; i < tn.value.size(); ++i)
            tn.adjoint[i] -= g * (pn.value[i] - tn.value[i]);
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  bool check_finite_;
};

}  // namespace dpbam
