#include <doctest.h>

#include "prefdiff/core/gradcheck.hpp"
#include "prefdiff/nn/attention.hpp"
#include "prefdiff/nn/layers.hpp"

using namespace prefdiff;
using Mat = Matrix<double>;

namespace {

Mat random_matrix(RngStream& rng, Index rows, Index cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Weighted sum of outputs, so every output coordinate carries a distinct gradient.
double weighted(const Mat& y, const Mat& w) { return (y.array() * w.array()).sum(); }

BasicTensor<double> as_tensor(const Mat& m) {
  return BasicTensor<double>({m.rows(), m.cols()}, Eigen::Map<const Vector<double>>(m.data(), m.size()));
}

Mat as_matrix(const BasicTensor<double>& t) { return t.matrix(); }

void randomize(const ParameterList<double>& params, RngStream& rng, double scale = 0.5) {
  for (auto* p : params)
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = scale * rng.normal();
}

constexpr double kTolerance = 1e-4;
constexpr double kStep = 1e-5;

}  // namespace

TEST_CASE("linear layer gradients") {
  RngStream rng(11, "linear");
  for (int trial = 0; trial < 10; ++trial) {
    nn::Linear<double> layer("lin", 5, 3);
    layer.init_xavier(rng);
    randomize(layer.parameters(), rng);
    const Mat x = random_matrix(rng, 4, 5);
    const Mat w = random_matrix(rng, 4, 3);
    for (auto* p : layer.parameters()) p->zero_grad();
    const Mat dx = layer.backward(x, w);
    auto loss = [&] { return weighted(layer.forward(x), w); };
    CHECK(grad_check_parameters<double>(layer.parameters(), loss, kStep) < kTolerance);
    auto fx = [&](const BasicTensor<double>& probe) { return weighted(layer.forward(as_matrix(probe)), w); };
    CHECK(grad_check<double>(fx, as_tensor(x), as_tensor(dx), kStep) < kTolerance);
  }
}

TEST_CASE("layer norm gradients") {
  RngStream rng(12, "ln");
  for (int trial = 0; trial < 10; ++trial) {
    nn::LayerNorm<double> layer("ln", 6);
    randomize(layer.parameters(), rng);
    const Mat x = random_matrix(rng, 3, 6, 2.0);
    const Mat w = random_matrix(rng, 3, 6);
    typename nn::LayerNorm<double>::Cache cache;
    layer.forward(x, cache);
    for (auto* p : layer.parameters()) p->zero_grad();
    const Mat dx = layer.backward(cache, w);
    auto loss = [&] {
      typename nn::LayerNorm<double>::Cache c;
      return weighted(layer.forward(x, c), w);
    };
    CHECK(grad_check_parameters<double>(layer.parameters(), loss, kStep) < kTolerance);
    auto fx = [&](const BasicTensor<double>& probe) {
      typename nn::LayerNorm<double>::Cache c;
      return weighted(layer.forward(as_matrix(probe), c), w);
    };
    CHECK(grad_check<double>(fx, as_tensor(x), as_tensor(dx), kStep) < kTolerance);
  }
}

TEST_CASE("embedding lookup gradients") {
  RngStream rng(13, "emb");
  for (int trial = 0; trial < 10; ++trial) {
    nn::Embedding<double> table("emb", 4, 5);
    table.init_normal(rng, 1.0);
    const std::vector<int> ids{0, 2, 2, 3, 1};
    const Mat w = random_matrix(rng, 5, 5);
    table.table.zero_grad();
    table.backward(ids, w);
    auto loss = [&] { return weighted(table.forward(ids), w); };
    CHECK(grad_check_parameters<double>(table.parameters(), loss, kStep) < kTolerance);
  }
}

TEST_CASE("perceptron gradients") {
  RngStream rng(14, "mlp");
  for (int trial = 0; trial < 10; ++trial) {
    nn::Mlp<double> mlp("mlp", 16, 12, 3);
    mlp.init_xavier(rng);
    randomize(mlp.parameters(), rng);
    const Mat x = random_matrix(rng, 5, 16);
    const Mat w = random_matrix(rng, 5, 3);
    typename nn::Mlp<double>::Cache cache;
    mlp.forward(x, cache);
    for (auto* p : mlp.parameters()) p->zero_grad();
    const Mat dx = mlp.backward(cache, w);
    auto loss = [&] {
      typename nn::Mlp<double>::Cache c;
      return weighted(mlp.forward(x, c), w);
    };
    CHECK(grad_check_parameters<double>(mlp.parameters(), loss, kStep) < kTolerance);
    auto fx = [&](const BasicTensor<double>& probe) {
      typename nn::Mlp<double>::Cache c;
      return weighted(mlp.forward(as_matrix(probe), c), w);
    };
    CHECK(grad_check<double>(fx, as_tensor(x), as_tensor(dx), kStep) < kTolerance);
  }
}

TEST_CASE("self-attention gradients") {
  RngStream rng(15, "sa");
  for (int trial = 0; trial < 10; ++trial) {
    nn::SelfAttention<double> attn("sa", 8, 2);
    attn.init_xavier(rng);
    const Index batch = 2;
    const Mat x = random_matrix(rng, batch * 3, 8);
    const Mat w = random_matrix(rng, batch * 3, 8);
    typename nn::SelfAttention<double>::Cache cache;
    attn.forward(x, batch, cache);
    for (auto* p : attn.parameters()) p->zero_grad();
    const Mat dx = attn.backward(cache, w);
    auto loss = [&] {
      typename nn::SelfAttention<double>::Cache c;
      return weighted(attn.forward(x, batch, c), w);
    };
    CHECK(grad_check_parameters<double>(attn.parameters(), loss, kStep) < kTolerance);
    auto fx = [&](const BasicTensor<double>& probe) {
      typename nn::SelfAttention<double>::Cache c;
      return weighted(attn.forward(as_matrix(probe), batch, c), w);
    };
    CHECK(grad_check<double>(fx, as_tensor(x), as_tensor(dx), kStep) < kTolerance);
  }
}

TEST_CASE("cross-attention gradients") {
  RngStream rng(16, "ca");
  for (int trial = 0; trial < 10; ++trial) {
    nn::CrossAttention<double> attn("ca", 8, 2);
    attn.init_xavier(rng);
    const Index batch = 2;
    const Mat x = random_matrix(rng, batch * 4, 8);
    const Mat ctx = random_matrix(rng, batch * 3, 8);
    const Mat w = random_matrix(rng, batch * 4, 8);
    typename nn::CrossAttention<double>::Cache cache;
    attn.forward(x, ctx, batch, cache);
    for (auto* p : attn.parameters()) p->zero_grad();
    Mat dctx = Mat::Zero(ctx.rows(), ctx.cols());
    const Mat dx = attn.backward(cache, w, dctx);
    auto loss = [&] {
      typename nn::CrossAttention<double>::Cache c;
      return weighted(attn.forward(x, ctx, batch, c), w);
    };
    CHECK(grad_check_parameters<double>(attn.parameters(), loss, kStep) < kTolerance);
    auto fx = [&](const BasicTensor<double>& probe) {
      typename nn::CrossAttention<double>::Cache c;
      return weighted(attn.forward(as_matrix(probe), ctx, batch, c), w);
    };
    CHECK(grad_check<double>(fx, as_tensor(x), as_tensor(dx), kStep) < kTolerance);
    auto fctx = [&](const BasicTensor<double>& probe) {
      typename nn::CrossAttention<double>::Cache c;
      return weighted(attn.forward(x, as_matrix(probe), batch, c), w);
    };
    CHECK(grad_check<double>(fctx, as_tensor(ctx), as_tensor(dctx), kStep) < kTolerance);
  }
}
