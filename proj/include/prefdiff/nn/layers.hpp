#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "prefdiff/core/rng.hpp"
#include "prefdiff/core/tensor.hpp"
#include "prefdiff/nn/functional.hpp"

namespace prefdiff::nn {

/// y = x W + b with W stored (in, out).
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out, bool with_bias = true)
      : weight(name + "/weight", {in, out}), has_bias_(with_bias) {
    if (with_bias) bias = Parameter<Scalar>(name + "/bias", {1, out});
  }

  bool has_bias() const { return has_bias_; }

  Index in_features() const { return weight.value.rows(); }
  Index out_features() const { return weight.value.cols(); }

  /// Xavier-uniform weights, zero bias.
  void init_xavier(RngStream& rng, double gain = 1.0) {
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(in_features() + out_features()));
    for (Index i = 0; i < weight.value.size(); ++i)
      weight.value.data()[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
    if (has_bias_) bias.value.data().setZero();
  }

  void init_zero() {
    weight.value.data().setZero();
    if (has_bias_) bias.value.data().setZero();
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    Matrix<Scalar> y(x.rows(), out_features());
    y.noalias() = x * weight.w();
    if (has_bias_) y.rowwise() += bias.w().row(0);
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Matrix<Scalar> backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
    accumulate(x, dy);
    Matrix<Scalar> dx(x.rows(), in_features());
    dx.noalias() = dy * weight.w().transpose();
    return dx;
  }

  /// Parameter gradients only, for layers whose input needs no gradient.
  void accumulate(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
    weight.g().noalias() += x.transpose() * dy;
    if (has_bias_) bias.g().row(0) += dy.colwise().sum();
  }

  ParameterList<Scalar> parameters() {
    if (has_bias_) return {&weight, &bias};
    return {&weight};
  }

  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

 private:
  bool has_bias_ = true;
};

/// Row-wise layer normalization with a learned elementwise scale and shift.
template <typename Scalar>
class LayerNorm {
 public:
  struct Cache {
    Matrix<Scalar> normalized;
    Vector<Scalar> rstd;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, Index dim) : gamma(name + "/gamma", {1, dim}), beta(name + "/beta", {1, dim}) {
    gamma.value.data().setOnes();
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    cache.normalized = layer_norm(x, cache.rstd);
    Matrix<Scalar> y = cache.normalized.array().rowwise() * gamma.w().row(0).array();
    y.rowwise() += beta.w().row(0);
    return y;
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    gamma.g().row(0) += (dy.array() * cache.normalized.array()).matrix().colwise().sum();
    beta.g().row(0) += dy.colwise().sum();
    Matrix<Scalar> dn = dy.array().rowwise() * gamma.w().row(0).array();
    return layer_norm_backward(cache.normalized, cache.rstd, dn);
  }

  ParameterList<Scalar> parameters() { return {&gamma, &beta}; }

  Parameter<Scalar> gamma;
  Parameter<Scalar> beta;
};

/// Lookup table of learned row vectors.
template <typename Scalar>
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, Index count, Index dim) : table(name, {count, dim}) {}

  Index count() const { return table.value.rows(); }

  void init_normal(RngStream& rng, double stddev) {
    for (Index i = 0; i < table.value.size(); ++i)
      table.value.data()[i] = static_cast<Scalar>(stddev * rng.normal());
  }

  Matrix<Scalar> forward(const std::vector<int>& ids) const {
    Matrix<Scalar> out(static_cast<Index>(ids.size()), table.value.cols());
    for (Index r = 0; r < out.rows(); ++r) {
      const int id = ids[static_cast<std::size_t>(r)];
      require(id >= 0 && id < count(), "embedding index out of range");
      out.row(r) = table.w().row(id);
    }
    return out;
  }

  void backward(const std::vector<int>& ids, const Matrix<Scalar>& dy) {
    for (Index r = 0; r < dy.rows(); ++r) table.g().row(ids[static_cast<std::size_t>(r)]) += dy.row(r);
  }

  ParameterList<Scalar> parameters() { return {&table}; }

  Parameter<Scalar> table;
};

/// Two affine layers with a SiLU between them.
template <typename Scalar>
class Mlp {
 public:
  struct Cache {
    Matrix<Scalar> input;
    Matrix<Scalar> pre;
    Matrix<Scalar> act;
  };

  Mlp() = default;
  Mlp(const std::string& name, Index in, Index hidden, Index out)
      : fc1(name + "/fc1", in, hidden), fc2(name + "/fc2", hidden, out) {}

  void init_xavier(RngStream& rng) {
    fc1.init_xavier(rng);
    fc2.init_xavier(rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    cache.input = x;
    cache.pre = fc1.forward(x);
    cache.act = silu(cache.pre);
    return fc2.forward(cache.act);
  }

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dy) {
    Matrix<Scalar> dact = fc2.backward(cache.act, dy);
    return fc1.backward(cache.input, silu_backward(cache.pre, dact));
  }

  ParameterList<Scalar> parameters() {
    auto p = fc1.parameters();
    for (auto* q : fc2.parameters()) p.push_back(q);
    return p;
  }

  Linear<Scalar> fc1;
  Linear<Scalar> fc2;
};

template <typename Scalar>
void append(ParameterList<Scalar>& into, const ParameterList<Scalar>& more) {
  into.insert(into.end(), more.begin(), more.end());
}

}  // namespace prefdiff::nn
