#pragma once

#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpbam/errors.hpp"
#include "dpbam/tensor.hpp"

namespace dpbam {

struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Maps named parameter blocks onto disjoint slices of a flat vector of
// dimension d. Slices cover [0, d) in declaration order.
class ParamLayout {
 public:
  ParamLayout() = default;

  explicit ParamLayout(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {
    std::size_t offset = 0;
    for (ParamBlock& b : blocks_) {
      b.size = Tensor::count(b.shape);
      if (b.size == 0) throw ContractError("parameter block '" + b.name + "' is empty");
      b.offset = offset;
      offset += b.size;
    }
    dim_ = offset;
    if (dim_ == 0) throw ContractError("parameter layout has dimension 0");
  }

  // Single anonymous block covering all of [0, d).
  static std::shared_ptr<const ParamLayout> flat(std::size_t d) {
    return std::make_shared<const ParamLayout>(
        std::vector<ParamBlock>{{"theta", {d}, 0, d}});
  }

  std::size_t dim() const { return dim_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t dim_ = 0;
};

// Flat parameter vector theta in R^d with a shared layout descriptor.
// Value semantics; arithmetic never mutates operands.
class ParamVector {
 public:
  ParamVector() = default;

  ParamVector(std::shared_ptr<const ParamLayout> layout, std::vector<double> values)
      : layout_(std::move(layout)), values_(std::move(values)) {
    if (!layout_ || values_.size() != layout_->dim())
      throw ContractError("ParamVector: values do not match layout dimension");
  }

  static ParamVector zeros(std::shared_ptr<const ParamLayout> layout) {
    std::size_t d = layout->dim();
    return ParamVector(std::move(layout), std::vector<double>(d, 0.0));
  }

  std::size_t dim() const { return values_.size(); }
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<const double> block_values(const ParamBlock& b) const {
    return std::span<const double>(values_).subspan(b.offset, b.size);
  }

  double l2_norm() const { return dpbam::l2_norm(values_); }

  ParamVector& operator+=(const ParamVector& o) {
    check(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  ParamVector& operator-=(const ParamVector& o) {
    check(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  ParamVector& operator*=(double k) {
    for (double& v : values_) v *= k;
    return *this;
  }

  // this += k * o
  ParamVector& axpy(double k, const ParamVector& o) {
    check(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += k * o.values_[i];
    return *this;
  }

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(double k, ParamVector a) { return a *= k; }

 private:
  void check(const ParamVector& o) const {
    if (o.dim() != dim()) throw ContractError("ParamVector: dimension mismatch");
  }

  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> values_;
};

inline double dot(const ParamVector& a, const ParamVector& b) {
  return dot(a.values(), b.values());
}

}  // namespace dpbam
