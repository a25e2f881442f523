#pragma once

#include <cmath>
#include <vector>

#include "prefdiff/core/types.hpp"

namespace prefdiff::nn {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
}

/// Elementwise logistic over a matrix; exp overflow for very negative inputs gives 0, not NaN.
template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& x) {
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

/// y = x * sigmoid(x), elementwise.
template <typename Scalar>
Matrix<Scalar> silu(const Matrix<Scalar>& x) {
  return (x.array() * sigmoid(x).array()).matrix();
}

/// dx = dy * silu'(x).
template <typename Scalar>
Matrix<Scalar> silu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  const Matrix<Scalar> s = sigmoid(x);
  return (dy.array() * s.array() * (Scalar(1) + x.array() * (Scalar(1) - s.array()))).matrix();
}

/// Row-wise normalization to zero mean, unit variance; returns the normalized
/// rows and stores 1/std per row for the backward pass.
template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, Vector<Scalar>& rstd, Scalar eps = Scalar(1e-5)) {
  const Index d = x.cols();
  Matrix<Scalar> y(x.rows(), d);
  rstd.resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mean).square().sum() / Scalar(d);
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    rstd[r] = inv;
    y.row(r) = (x.row(r).array() - mean) * inv;
  }
  return y;
}

/// Gradient of layer_norm given its output `y` and saved `rstd`.
template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& y, const Vector<Scalar>& rstd, const Matrix<Scalar>& dy) {
  const Index d = y.cols();
  Matrix<Scalar> dx(y.rows(), d);
  for (Index r = 0; r < y.rows(); ++r) {
    const Scalar mean_dy = dy.row(r).sum() / Scalar(d);
    const Scalar mean_dyy = dy.row(r).dot(y.row(r)) / Scalar(d);
    dx.row(r) = rstd[r] * (dy.row(r).array() - mean_dy - y.row(r).array() * mean_dyy);
  }
  return dx;
}

/// Sinusoidal embedding of integer timesteps: [cos(t f_i), sin(t f_i)],
/// f_i = 10000^(-i / half).
template <typename Scalar>
Matrix<Scalar> timestep_embedding(const std::vector<int>& timesteps, Index dim) {
  require(dim % 2 == 0, "timestep embedding width must be even");
  const Index half = dim / 2;
  Matrix<Scalar> out(static_cast<Index>(timesteps.size()), dim);
  for (Index b = 0; b < out.rows(); ++b) {
    for (Index i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      const double arg = static_cast<double>(timesteps[static_cast<std::size_t>(b)]) * freq;
      out(b, i) = static_cast<Scalar>(std::cos(arg));
      out(b, half + i) = static_cast<Scalar>(std::sin(arg));
    }
  }
  return out;
}

}  // namespace prefdiff::nn
