#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "dpbam/errors.hpp"

namespace dpbam {

// Dense row-major tensor over an arbitrary scalar (double in the default
// 64-bit mode, float in the opt-in 32-bit speed mode, Dual inside the
// forward-over-reverse path).
template <class S>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), S(0)) {}

  TensorT(std::vector<std::size_t> shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw ContractError("tensor data length does not match shape");
  }

  static TensorT scalar(S value) { return TensorT({}, {value}); }

  static TensorT vector(std::vector<S> data) {
    std::size_t n = data.size();
    return TensorT({n}, std::move(data));
  }

  static TensorT matrix(std::size_t rows, std::size_t cols, std::vector<S> data) {
    return TensorT({rows, cols}, std::move(data));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::span<S> values() { return data_; }
  std::span<const S> values() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  S& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const S& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  // Copy of row i of a rank-2 tensor as a rank-1 tensor.
  TensorT row(std::size_t i) const {
    if (rank() != 2) throw ContractError("row() requires a rank-2 tensor");
    std::size_t cols = shape_[1];
    std::vector<S> out(data_.begin() + i * cols, data_.begin() + (i + 1) * cols);
    return TensorT({cols}, std::move(out));
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<S> data_;
};

using Tensor = TensorT<double>;

// Deterministic left-to-right reductions. All norms and means in the library
// funnel through these so repeated runs are bit-reproducible.
inline double l2_norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Cosine similarity with a zero-vector sentinel of 0 (callers that care mark
// the degeneracy separately).
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace dpbam
