#pragma once

#include <cmath>
#include <string>

#include "prefdiff/nn/layers.hpp"

namespace prefdiff::nn {

/// Scaled dot-product attention over a batch of independent sequences.
/// q is (batch * nq, dim); k and v are (batch * nk, dim); heads split the
/// feature columns. Attention weights are kept in `probs`, laid out as
/// (batch * heads * nq, nk).
template <typename Scalar>
Matrix<Scalar> attention_forward(const Matrix<Scalar>& q, const Matrix<Scalar>& k, const Matrix<Scalar>& v,
                                 Index batch, Index heads, Matrix<Scalar>& probs) {
  const Index nq = q.rows() / batch;
  const Index nk = k.rows() / batch;
  const Index dh = q.cols() / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  probs.resize(batch * heads * nq, nk);
  Matrix<Scalar> out(q.rows(), q.cols());
  Matrix<Scalar> s(nq, nk);
  for (Index b = 0; b < batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      s.noalias() = scale * q.block(b * nq, h * dh, nq, dh) * k.block(b * nk, h * dh, nk, dh).transpose();
      for (Index r = 0; r < nq; ++r) {
        const Scalar m = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - m).exp();
        s.row(r) /= s.row(r).sum();
      }
      probs.middleRows((b * heads + h) * nq, nq) = s;
      out.block(b * nq, h * dh, nq, dh).noalias() = s * v.block(b * nk, h * dh, nk, dh);
    }
  }
  return out;
}

template <typename Scalar>
void attention_backward(const Matrix<Scalar>& q, const Matrix<Scalar>& k, const Matrix<Scalar>& v,
                        const Matrix<Scalar>& probs, const Matrix<Scalar>& dout, Index batch, Index heads,
                        Matrix<Scalar>& dq, Matrix<Scalar>& dk, Matrix<Scalar>& dv) {
  const Index nq = q.rows() / batch;
  const Index nk = k.rows() / batch;
  const Index dh = q.cols() / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  dq.setZero(q.rows(), q.cols());
  dk.setZero(k.rows(), k.cols());
  dv.setZero(v.rows(), v.cols());
  Matrix<Scalar> dp(nq, nk);
  Matrix<Scalar> ds(nq, nk);
  for (Index b = 0; b < batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      const auto p = probs.middleRows((b * heads + h) * nq, nq);
      const auto dob = dout.block(b * nq, h * dh, nq, dh);
      dp.noalias() = dob * v.block(b * nk, h * dh, nk, dh).transpose();
      dv.block(b * nk, h * dh, nk, dh).noalias() = p.transpose() * dob;
      for (Index r = 0; r < nq; ++r) {
        const Scalar dot = dp.row(r).dot(p.row(r));
        ds.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
      }
      dq.block(b * nq, h * dh, nq, dh).noalias() = scale * ds * k.block(b * nk, h * dh, nk, dh);
      dk.block(b * nk, h * dh, nk, dh).noalias() = scale * ds.transpose() * q.block(b * nq, h * dh, nq, dh);
    }
  }
}

/// Multi-head self-attention over each example's token block.
template <typename Scalar>
class SelfAttention {
 public:
  struct Cache {
    Matrix<Scalar> input, q, k, v, probs, mixed;
    Index batch = 0;
  };

  SelfAttention() = default;
  SelfAttention(const std::string& name, Index dim, Index heads)
      : heads_(heads), qkv(name + "/qkv", dim, 3 * dim, false), out(name + "/out", dim, dim) {
    require(dim % heads == 0, "attention width must be divisible by the head count");
  }

  void init_xavier(RngStream& rng) {
    qkv.init_xavier(rng);
    out.init_xavier(rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Index batch, Cache& c) const {
    const Index d = x.cols();
    c.input = x;
    c.batch = batch;
    const Matrix<Scalar> proj = qkv.forward(x);
    c.q = proj.leftCols(d);
    c.k = proj.middleCols(d, d);
    c.v = proj.rightCols(d);
    c.mixed = attention_forward(c.q, c.k, c.v, batch, heads_, c.probs);
    return out.forward(c.mixed);
  }

  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy) {
    const Index d = c.input.cols();
    const Matrix<Scalar> dmixed = out.backward(c.mixed, dy);
    Matrix<Scalar> dq, dk, dv;
    attention_backward(c.q, c.k, c.v, c.probs, dmixed, c.batch, heads_, dq, dk, dv);
    Matrix<Scalar> dproj(c.input.rows(), 3 * d);
    dproj << dq, dk, dv;
    return qkv.backward(c.input, dproj);
  }

  ParameterList<Scalar> parameters() {
    auto p = qkv.parameters();
    append(p, out.parameters());
    return p;
  }

  Index heads_ = 1;
  Linear<Scalar> qkv;
  Linear<Scalar> out;
};

/// Multi-head attention from each example's tokens to that example's
/// conditioning tokens.
template <typename Scalar>
class CrossAttention {
 public:
  struct Cache {
    Matrix<Scalar> input, context, q, k, v, probs, mixed;
    Index batch = 0;
  };

  CrossAttention() = default;
  CrossAttention(const std::string& name, Index dim, Index heads)
      : heads_(heads), query(name + "/query", dim, dim, false), key_value(name + "/kv", dim, 2 * dim, false),
        out(name + "/out", dim, dim) {
    require(dim % heads == 0, "attention width must be divisible by the head count");
  }

  void init_xavier(RngStream& rng) {
    query.init_xavier(rng);
    key_value.init_xavier(rng);
    out.init_xavier(rng);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, const Matrix<Scalar>& context, Index batch, Cache& c) const {
    const Index d = x.cols();
    c.input = x;
    c.context = context;
    c.batch = batch;
    c.q = query.forward(x);
    const Matrix<Scalar> kv = key_value.forward(context);
    c.k = kv.leftCols(d);
    c.v = kv.rightCols(d);
    c.mixed = attention_forward(c.q, c.k, c.v, batch, heads_, c.probs);
    return out.forward(c.mixed);
  }

  /// Returns dL/dx; adds dL/dcontext into `dcontext`.
  Matrix<Scalar> backward(const Cache& c, const Matrix<Scalar>& dy, Matrix<Scalar>& dcontext) {
    const Index d = c.input.cols();
    const Matrix<Scalar> dmixed = out.backward(c.mixed, dy);
    Matrix<Scalar> dq, dk, dv;
    attention_backward(c.q, c.k, c.v, c.probs, dmixed, c.batch, heads_, dq, dk, dv);
    Matrix<Scalar> dkv(c.context.rows(), 2 * d);
    dkv << dk, dv;
    dcontext += key_value.backward(c.context, dkv);
    return query.backward(c.input, dq);
  }

  ParameterList<Scalar> parameters() {
    auto p = query.parameters();
    append(p, key_value.parameters());
    append(p, out.parameters());
    return p;
  }

  Index heads_ = 1;
  Linear<Scalar> query;
  Linear<Scalar> key_value;
  Linear<Scalar> out;
};

}  // namespace prefdiff::nn
