#include "prefdiff/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>

#include "prefdiff/core/gradcheck.hpp"
#include "prefdiff/nn/attention.hpp"
#include "prefdiff/nn/layers.hpp"
#include "prefdiff/prior.hpp"
#include "prefdiff/verifier.hpp"

namespace prefdiff {

namespace {

using Mat = Matrix<double>;
using Tensor64 = BasicTensor<double>;

constexpr double kStep = 1e-5;
constexpr double kLayerTolerance = 1e-4;
constexpr double kDenoiserTolerance = 1e-3;

Mat normal(RngStream& rng, Index rows, Index cols, double scale = 1.0) {
  Mat m(rows, cols);
  rng.fill_normal(m.data(), m.size());
  return scale * m;
}

Tensor64 as_tensor(const Mat& m) { return Tensor64({m.rows(), m.cols()}, Eigen::Map<const Vector<double>>(m.data(), m.size())); }

double weighted(const Mat& y, const Mat& w) { return (y.array() * w.array()).sum(); }

void perturb(const ParameterList<double>& params, RngStream& rng, double scale) {
  for (auto* p : params)
    for (Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += scale * rng.normal();
}

void zero(const ParameterList<double>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed) {
  RngStream root(seed, "gradcheck");
  std::vector<GradCheckRow> rows;

  {
    RngStream rng = root.fork("linear");
    nn::Linear<double> layer("lin", 5, 3);
    layer.init_xavier(rng);
    perturb(layer.parameters(), rng, 0.5);
    const Mat x = normal(rng, 4, 5), w = normal(rng, 4, 3);
    zero(layer.parameters());
    const Mat dx = layer.backward(x, w);
    const double e = std::max(
        grad_check_parameters<double>(layer.parameters(), [&] { return weighted(layer.forward(x), w); }, kStep),
        grad_check<double>([&](const Tensor64& p) { return weighted(layer.forward(p.matrix()), w); }, as_tensor(x),
                           as_tensor(dx), kStep));
    rows.push_back({"linear", e, kLayerTolerance});
  }
  {
    RngStream rng = root.fork("layer_norm");
    nn::LayerNorm<double> layer("ln", 6);
    perturb(layer.parameters(), rng, 0.5);
    const Mat x = normal(rng, 3, 6, 2.0), w = normal(rng, 3, 6);
    typename nn::LayerNorm<double>::Cache cache;
    layer.forward(x, cache);
    zero(layer.parameters());
    const Mat dx = layer.backward(cache, w);
    auto f = [&](const Mat& in) {
      typename nn::LayerNorm<double>::Cache c;
      return weighted(layer.forward(in, c), w);
    };
    const double e =
        std::max(grad_check_parameters<double>(layer.parameters(), [&] { return f(x); }, kStep),
                 grad_check<double>([&](const Tensor64& p) { return f(p.matrix()); }, as_tensor(x), as_tensor(dx), kStep));
    rows.push_back({"layer_norm", e, kLayerTolerance});
  }
  {
    RngStream rng = root.fork("embedding");
    nn::Embedding<double> table("emb", 4, 5);
    table.init_normal(rng, 1.0);
    const std::vector<int> ids{0, 2, 2, 3, 1};
    const Mat w = normal(rng, 5, 5);
    zero(table.parameters());
    table.backward(ids, w);
    rows.push_back({"embedding",
                    grad_check_parameters<double>(table.parameters(), [&] { return weighted(table.forward(ids), w); }, kStep),
                    kLayerTolerance});
  }
  {
    RngStream rng = root.fork("mlp");
    nn::Mlp<double> mlp("mlp", 16, 12, 3);
    mlp.init_xavier(rng);
    perturb(mlp.parameters(), rng, 0.5);
    const Mat x = normal(rng, 5, 16), w = normal(rng, 5, 3);
    typename nn::Mlp<double>::Cache cache;
    mlp.forward(x, cache);
    zero(mlp.parameters());
    const Mat dx = mlp.backward(cache, w);
    auto f = [&](const Mat& in) {
      typename nn::Mlp<double>::Cache c;
      return weighted(mlp.forward(in, c), w);
    };
    const double e =
        std::max(grad_check_parameters<double>(mlp.parameters(), [&] { return f(x); }, kStep),
                 grad_check<double>([&](const Tensor64& p) { return f(p.matrix()); }, as_tensor(x), as_tensor(dx), kStep));
    rows.push_back({"mlp", e, kLayerTolerance});
  }
  {
    RngStream rng = root.fork("self_attention");
    nn::SelfAttention<double> attn("sa", 8, 2);
    attn.init_xavier(rng);
    const Index batch = 2;
    const Mat x = normal(rng, batch * 3, 8), w = normal(rng, batch * 3, 8);
    typename nn::SelfAttention<double>::Cache cache;
    attn.forward(x, batch, cache);
    zero(attn.parameters());
    const Mat dx = attn.backward(cache, w);
    auto f = [&](const Mat& in) {
      typename nn::SelfAttention<double>::Cache c;
      return weighted(attn.forward(in, batch, c), w);
    };
    const double e =
        std::max(grad_check_parameters<double>(attn.parameters(), [&] { return f(x); }, kStep),
                 grad_check<double>([&](const Tensor64& p) { return f(p.matrix()); }, as_tensor(x), as_tensor(dx), kStep));
    rows.push_back({"self_attention", e, kLayerTolerance});
  }
  {
    RngStream rng = root.fork("cross_attention");
    nn::CrossAttention<double> attn("ca", 8, 2);
    attn.init_xavier(rng);
    const Index batch = 2;
    const Mat x = normal(rng, batch * 4, 8), ctx = normal(rng, batch * 3, 8), w = normal(rng, batch * 4, 8);
    typename nn::CrossAttention<double>::Cache cache;
    attn.forward(x, ctx, batch, cache);
    zero(attn.parameters());
    Mat dctx = Mat::Zero(ctx.rows(), ctx.cols());
    const Mat dx = attn.backward(cache, w, dctx);
    auto f = [&](const Mat& in, const Mat& c_in) {
      typename nn::CrossAttention<double>::Cache c;
      return weighted(attn.forward(in, c_in, batch, c), w);
    };
    double e = grad_check_parameters<double>(attn.parameters(), [&] { return f(x, ctx); }, kStep);
    e = std::max(e, grad_check<double>([&](const Tensor64& p) { return f(p.matrix(), ctx); }, as_tensor(x), as_tensor(dx), kStep));
    e = std::max(e, grad_check<double>([&](const Tensor64& p) { return f(x, p.matrix()); }, as_tensor(ctx), as_tensor(dctx), kStep));
    rows.push_back({"cross_attention", e, kLayerTolerance});
  }
  {
    RngStream rng = root.fork("prior_block");
    PriorBlock<double> block("b", 8, 2, 16);
    block.initialize(rng);
    perturb(block.modulation.parameters(), rng, 0.3);
    const Index batch = 2;
    const Mat tokens = normal(rng, batch * 3, 8), cond = normal(rng, batch, 8), ctx = normal(rng, batch * 3, 8);
    const Mat w = normal(rng, batch * 3, 8);
    typename PriorBlock<double>::Cache cache;
    block.forward(tokens, cond, ctx, batch, cache);
    zero(block.parameters());
    Mat dcond = Mat::Zero(batch, 8), dctx = Mat::Zero(batch * 3, 8);
    const Mat dtokens = block.backward(cache, w, cond, dcond, dctx);
    auto f = [&](const Mat& t, const Mat& c, const Mat& x) {
      typename PriorBlock<double>::Cache tmp;
      return weighted(block.forward(t, c, x, batch, tmp), w);
    };
    double e = grad_check_parameters<double>(block.parameters(), [&] { return f(tokens, cond, ctx); }, kStep);
    e = std::max(e, grad_check<double>([&](const Tensor64& p) { return f(p.matrix(), cond, ctx); }, as_tensor(tokens),
                                       as_tensor(dtokens), kStep));
    e = std::max(e, grad_check<double>([&](const Tensor64& p) { return f(tokens, p.matrix(), ctx); }, as_tensor(cond),
                                       as_tensor(dcond), kStep));
    e = std::max(e, grad_check<double>([&](const Tensor64& p) { return f(tokens, cond, p.matrix()); }, as_tensor(ctx),
                                       as_tensor(dctx), kStep));
    rows.push_back({"prior_block", e, kLayerTolerance});
  }
  {
    RngStream rng = root.fork("verifier");
    VerifierNet<double> net;
    net.initialize(rng);
    const Mat x = normal(rng, 5, kVerifierFeatureDim);
    const std::vector<int> users{0, 1, 2, 3, 1};
    const std::vector<int> labels{1, 0, 0, 1, 1};
    auto loss = [&] {
      typename VerifierNet<double>::Cache c;
      const Vector<double> l = net.logits(users, x, c);
      double total = 0;
      for (Index i = 0; i < l.size(); ++i)
        total += binary_cross_entropy(1.0 / (1.0 + std::exp(-l[i])), labels[static_cast<std::size_t>(i)]);
      return total / 5;
    };
    typename VerifierNet<double>::Cache cache;
    const Vector<double> l = net.logits(users, x, cache);
    Vector<double> d(5);
    for (Index i = 0; i < 5; ++i) d[i] = (1.0 / (1.0 + std::exp(-l[i])) - labels[static_cast<std::size_t>(i)]) / 5;
    zero(net.parameters());
    net.backward(cache, d);
    rows.push_back({"verifier", grad_check_parameters<double>(net.parameters(), loss, kStep), kLayerTolerance});
  }
  {
    RngStream rng = root.fork("denoiser");
    PriorConfig cfg;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.hidden = 16;
    cfg.tokens = 4;
    PriorModel<double> model(cfg);
    model.initialize(rng);
    // Off the zero-gated initialization so every path carries gradient.
    perturb(model.parameters(), rng, 0.05);
    const Index batch = 3;
    const Mat x_t = normal(rng, batch, cfg.embedding_dim), x0 = normal(rng, batch, cfg.embedding_dim, 0.3);
    const std::vector<int> ts{1, 500, 1000}, users{0, 3, model.null_user()}, ratings{1, 0, model.null_rating()};
    auto loss = [&] {
      typename PriorModel<double>::Workspace ws;
      return (model.forward(x_t, ts, users, ratings, ws) - x0).rowwise().squaredNorm().mean();
    };
    typename PriorModel<double>::Workspace ws;
    const Mat y = model.forward(x_t, ts, users, ratings, ws);
    model.zero_grad();
    model.backward(ws, 2.0 * (y - x0) / static_cast<double>(batch));
    rows.push_back({"denoiser_loss", grad_check_parameters<double>(model.parameters(), loss, kStep), kDenoiserTolerance});
  }
  return rows;
}

}  // namespace prefdiff
