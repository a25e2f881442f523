#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "prefdiff/core/types.hpp"

namespace prefdiff {

/// Dense row-major tensor: a shape plus a flat coefficient vector.
template <typename Scalar>
class BasicTensor {
 public:
  BasicTensor() = default;

  explicit BasicTensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    for (Index d : shape_) require(d > 0, "tensor dimensions must be positive");
    data_ = Vector<Scalar>::Zero(element_count(shape_));
  }

  BasicTensor(std::vector<Index> shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (Index d : shape_) require(d > 0, "tensor dimensions must be positive");
    require(element_count(shape_) == data_.size(), "tensor shape does not match data length");
  }

  static Index element_count(const std::vector<Index>& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  Index rank() const { return static_cast<Index>(shape_.size()); }

  Vector<Scalar>& data() { return data_; }
  const Vector<Scalar>& data() const { return data_; }

  /// First dimension as rows, the rest flattened into columns.
  Index rows() const { return shape_.empty() ? 1 : shape_.front(); }
  Index cols() const { return rows() == 0 ? 0 : size() / rows(); }

  MatrixMap<Scalar> matrix() { return MatrixMap<Scalar>(data_.data(), rows(), cols()); }
  ConstMatrixMap<Scalar> matrix() const { return ConstMatrixMap<Scalar>(data_.data(), rows(), cols()); }

  BasicTensor reshaped(std::vector<Index> shape) const { return BasicTensor(std::move(shape), data_); }

  bool all_finite() const { return data_.allFinite(); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>());
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_.size() == b.data_.size() &&
           std::equal(a.data_.data(), a.data_.data() + a.data_.size(), b.data_.data());
  }

 private:
  std::vector<Index> shape_;
  Vector<Scalar> data_;
};

using Tensor = BasicTensor<float>;

/// A trainable tensor together with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  BasicTensor<Scalar> value;
  BasicTensor<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<Index> shape) : name(std::move(n)), value(shape), grad(shape) {}

  MatrixMap<Scalar> w() { return value.matrix(); }
  ConstMatrixMap<Scalar> w() const { return value.matrix(); }
  MatrixMap<Scalar> g() { return grad.matrix(); }

  void zero_grad() { grad.data().setZero(); }
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

template <typename Scalar>
Index parameter_count(const ParameterList<Scalar>& params) {
  Index n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

}  // namespace prefdiff
