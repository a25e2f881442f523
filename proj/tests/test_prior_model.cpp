#include <doctest.h>

#include "prefdiff/core/gradcheck.hpp"
#include "prefdiff/prior.hpp"

using namespace prefdiff;

namespace {

PriorConfig reduced_config() {
  PriorConfig c;
  c.layers = 2;
  c.heads = 4;
  c.hidden = 16;
  c.tokens = 4;
  c.token_dim = 8;
  c.embedding_dim = 32;
  return c;
}

template <typename Scalar>
Matrix<Scalar> normal_matrix(RngStream& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(scale * rng.normal());
  return m;
}

}  // namespace

TEST_CASE("prior block with AdaLN-Zero modulation passes grad_check") {
  RngStream rng(21, "block");
  for (int trial = 0; trial < 10; ++trial) {
    PriorBlock<double> block("b", 8, 2, 16);
    block.initialize(rng);
    for (auto* p : block.modulation.parameters())
      for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = 0.3 * rng.normal();
    const Index batch = 2;
    const Matrix<double> tokens = normal_matrix<double>(rng, batch * 3, 8);
    const Matrix<double> cond_act = normal_matrix<double>(rng, batch, 8);
    const Matrix<double> context = normal_matrix<double>(rng, batch * 3, 8);
    const Matrix<double> w = normal_matrix<double>(rng, batch * 3, 8);

    typename PriorBlock<double>::Cache cache;
    block.forward(tokens, cond_act, context, batch, cache);
    for (auto* p : block.parameters()) p->zero_grad();
    Matrix<double> dcond = Matrix<double>::Zero(batch, 8);
    Matrix<double> dctx = Matrix<double>::Zero(batch * 3, 8);
    const Matrix<double> dtokens = block.backward(cache, w, cond_act, dcond, dctx);

    auto eval = [&](const Matrix<double>& t, const Matrix<double>& c, const Matrix<double>& x) {
      typename PriorBlock<double>::Cache tmp;
      return (block.forward(t, c, x, batch, tmp).array() * w.array()).sum();
    };
    CHECK(grad_check_parameters<double>(block.parameters(), [&] { return eval(tokens, cond_act, context); }, 1e-5) <
          1e-4);
    auto as_tensor = [](const Matrix<double>& m) {
      return BasicTensor<double>({m.rows(), m.cols()}, Eigen::Map<const Vector<double>>(m.data(), m.size()));
    };
    CHECK(grad_check<double>([&](const BasicTensor<double>& p) { return eval(p.matrix(), cond_act, context); },
                             as_tensor(tokens), as_tensor(dtokens), 1e-5) < 1e-4);
    CHECK(grad_check<double>([&](const BasicTensor<double>& p) { return eval(tokens, p.matrix(), context); },
                             as_tensor(cond_act), as_tensor(dcond), 1e-5) < 1e-4);
    CHECK(grad_check<double>([&](const BasicTensor<double>& p) { return eval(tokens, cond_act, p.matrix()); },
                             as_tensor(context), as_tensor(dctx), 1e-5) < 1e-4);
  }
}

TEST_CASE("full denoiser loss passes grad_check on a 4-token config") {
  RngStream rng(22, "denoiser");
  PriorModel<double> model(reduced_config());
  model.initialize(rng);
  // Move off the zero-gated initialization so every path carries gradient.
  for (auto* p : model.parameters())
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += 0.05 * rng.normal();

  const Index batch = 3;
  const Matrix<double> x_t = normal_matrix<double>(rng, batch, 32);
  const Matrix<double> x0 = normal_matrix<double>(rng, batch, 32, 0.3);
  const std::vector<int> ts{1, 500, 1000};
  const std::vector<int> users{0, 3, 4};
  const std::vector<int> ratings{1, 0, 2};

  auto loss = [&] {
    typename PriorModel<double>::Workspace ws;
    return (model.forward(x_t, ts, users, ratings, ws) - x0).rowwise().squaredNorm().mean();
  };
  typename PriorModel<double>::Workspace ws;
  const Matrix<double> y = model.forward(x_t, ts, users, ratings, ws);
  model.zero_grad();
  model.backward(ws, 2.0 * (y - x0) / static_cast<double>(batch));
  CHECK(grad_check_parameters<double>(model.parameters(), loss, 1e-5) < 1e-3);
}

TEST_CASE("zero-initialized blocks are identities and ignore conditioning") {
  RngStream rng(23, "init");
  PriorConfig cfg = reduced_config();
  PriorModel<float> model(cfg);
  model.initialize(rng);
  const Matrix<float> x = normal_matrix<float>(rng, 2, 32);

  typename PriorModel<float>::Workspace ws;
  const Matrix<float> a = model.forward(x, {7, 7}, {0, 1}, {1, 0}, ws);
  const Matrix<float> b = model.forward(x, {900, 3}, {model.null_user(), 2}, {model.null_rating(), 1}, ws);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);

  // Trace the tokenizer -> merge affine path by hand.
  Matrix<float> tokens = Eigen::Map<const Matrix<float>>(model.lift.forward(x).data(), 2 * cfg.tokens, cfg.token_dim);
  Matrix<float> h = model.token_proj.forward(tokens);
  for (Index e = 0; e < 2; ++e) h.middleRows(e * cfg.tokens, cfg.tokens) += model.positions.w();
  const Matrix<float> head = model.head_proj.forward(h);
  const Matrix<float> flat = Eigen::Map<const Matrix<float>>(head.data(), 2, cfg.tokens * cfg.token_dim);
  const Matrix<float> expected = model.merge.forward(flat);
  CHECK((a - expected).cwiseAbs().maxCoeff() < 1e-5f);

  const Vector<float> single = denoise_predict(model, Vector<float>(x.row(0).transpose()), {std::nullopt, std::nullopt, 10});
  CHECK((single.transpose() - a.row(0)).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("full-size configuration stays under the reference parameter budget") {
  PriorModel<float> model(PriorConfig{});
  const Index count = model.parameter_count();
  CHECK(count > 1'000'000);
  CHECK(count < 4'400'000);
}

TEST_CASE("invalid configurations are rejected") {
  PriorConfig c;
  c.heads = 7;
  CHECK_THROWS_AS(PriorModel<float>{c}, ContractViolation);
  PriorConfig d;
  d.sampling_steps = 2000;
  CHECK_THROWS_AS(d.validate(), ContractViolation);
}
