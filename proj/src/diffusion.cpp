#include "prefdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefdiff/core/adam.hpp"

namespace prefdiff {

namespace {

constexpr std::size_t kEvalExamples = 1024;
constexpr Index kSampleChunk = 64;

struct Batch {
  Matrix<float> x0, x_t;
  std::vector<int> timesteps, users, ratings;
};

// Noised batch for the given example indices. Per-example draws come from
// stream.fork(position) so a batch is reproducible on its own.
Batch make_batch(std::span<const Interaction> data, std::span<const std::size_t> idx, const NoiseSchedule& schedule,
                 const PriorConfig& config, const RngStream& stream, double dropout) {
  const Index b = static_cast<Index>(idx.size());
  const Index d = config.embedding_dim;
  Batch out;
  out.x0.resize(b, d);
  out.x_t.resize(b, d);
  out.timesteps.resize(idx.size());
  out.users.resize(idx.size());
  out.ratings.resize(idx.size());
  for (Index i = 0; i < b; ++i) {
    const Interaction& it = data[idx[static_cast<std::size_t>(i)]];
    RngStream r = stream.fork(static_cast<std::uint64_t>(i));
    const int t = 1 + static_cast<int>(r.below(static_cast<std::uint64_t>(schedule.steps())));
    const bool drop = dropout > 0.0 && r.bernoulli(dropout);
    const double ab = schedule.alpha_bar(t);
    const float a = static_cast<float>(std::sqrt(ab));
    const float s = static_cast<float>(std::sqrt(1.0 - ab));
    for (Index k = 0; k < d; ++k) {
      const float x = it.embedding[k];
      out.x0(i, k) = x;
      out.x_t(i, k) = a * x + s * static_cast<float>(r.normal());
    }
    const auto u = static_cast<std::size_t>(i);
    out.timesteps[u] = t;
    out.users[u] = drop ? config.num_users : it.user_id;
    out.ratings[u] = drop ? config.num_ratings : it.rating;
  }
  return out;
}

double batch_sse(const Matrix<float>& pred, const Matrix<float>& target) {
  return (pred - target).cast<double>().squaredNorm();
}

void check_training_data(std::span<const Interaction> data, const PriorConfig& config) {
  require(!data.empty(), "train_prior: empty training data");
  require(config.embedding_dim == kEmbeddingDim, "train_prior: embedding_dim must match the codec");
  for (const auto& it : data) {
    require(it.user_id >= 0 && it.user_id < config.num_users, "train_prior: user id out of range");
    require(it.rating >= 0 && it.rating < config.num_ratings, "train_prior: rating out of range");
    require(it.embedding.allFinite(), "train_prior: non-finite embedding");
  }
}

}  // namespace

NoiseSchedule make_schedule(const PriorConfig& config) { return NoiseSchedule(config.steps_train); }

double prior_loss(const PriorModel<float>& model, const NoiseSchedule& schedule, std::span<const Interaction> data,
                  RngStream rng) {
  require(!data.empty(), "prior_loss: empty data");
  const PriorConfig& config = model.config();
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  typename PriorModel<float>::Workspace ws;
  double sse = 0.0;
  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const std::size_t len = std::min(chunk, idx.size() - start);
    const Batch b = make_batch(data, std::span(idx).subspan(start, len), schedule, config,
                               rng.fork(static_cast<std::uint64_t>(start)), 0.0);
    sse += batch_sse(model.forward(b.x_t, b.timesteps, b.users, b.ratings, ws), b.x0);
  }
  return sse / (static_cast<double>(data.size()) * config.embedding_dim);
}

TrainedPrior train_prior(std::span<const Interaction> data, const PriorConfig& config, const RngStream& rng,
                         const EpochCallback& on_epoch) {
  config.validate();
  check_training_data(data, config);
  TrainedPrior out{PriorModel<float>(config), make_schedule(config), {}};
  RngStream init = rng.fork("init");
  out.model.initialize(init);

  // Fixed evaluation subset drawn from the training data.
  std::vector<Interaction> eval_set;
  {
    RngStream pick = rng.fork("eval-pick");
    const std::size_t n = std::min(kEvalExamples, data.size());
    eval_set.reserve(n);
    for (std::size_t i = 0; i < n; ++i) eval_set.push_back(data[pick.below(data.size())]);
  }
  const RngStream eval_noise = rng.fork("eval-noise");
  out.trace.initial_eval_loss = prior_loss(out.model, out.schedule, eval_set, eval_noise);

  AdamHyper hyper;
  hyper.learning_rate = config.lr;
  AdamOptimizer<float> adam(out.model.parameters(), hyper);
  typename PriorModel<float>::Workspace ws;
  std::vector<std::size_t> order(data.size());
  const RngStream epochs = rng.fork("epochs");
  const auto batch = static_cast<std::size_t>(config.batch);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const RngStream er = epochs.fork(static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffler = er.fork("shuffle");
    shuffler.shuffle(order);
    const RngStream noise = er.fork("noise");
    double sse = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      const Batch b = make_batch(data, std::span(order).subspan(start, len), out.schedule, config,
                                 noise.fork(static_cast<std::uint64_t>(start)), config.cond_dropout);
      const Matrix<float> pred = out.model.forward(b.x_t, b.timesteps, b.users, b.ratings, ws);
      sse += batch_sse(pred, b.x0);
      const float scale = 2.0f / static_cast<float>(len * static_cast<std::size_t>(config.embedding_dim));
      adam.zero_grad();
      out.model.backward(ws, scale * (pred - b.x0));
      adam.step();
    }
    const double loss = sse / (static_cast<double>(order.size()) * config.embedding_dim);
    if (!std::isfinite(loss)) throw NumericError("train_prior: loss diverged");
    out.trace.epoch_loss.push_back(loss);
    if (on_epoch) on_epoch(epoch, loss, out.model);
  }
  out.trace.final_eval_loss = prior_loss(out.model, out.schedule, eval_set, eval_noise);
  return out;
}

Matrix<float> sample_many(const PriorModel<float>& model, const NoiseSchedule& schedule, const SampleOptions& options,
                          Index n, const RngStream& rng) {
  const PriorConfig& config = model.config();
  require(n >= 0, "sample: negative sample count");
  require(options.steps >= 1 && options.steps <= schedule.steps(), "sample: step count must lie in [1, T]");
  require(options.omega >= 0.0, "sample: guidance weight must be non-negative");
  require(options.user >= 0 && options.user < config.num_users, "sample: unknown user id");
  require(options.rating >= 0 && options.rating < config.num_ratings, "sample: rating out of range");

  const Index d = config.embedding_dim;
  const auto omega = static_cast<float>(options.omega);
  const bool need_uncond = omega != 1.0f;
  const bool need_cond = omega != 0.0f;
  const std::vector<int> ts = schedule.strided_timesteps(options.steps);
  Matrix<float> result(n, d);
  typename PriorModel<float>::Workspace ws;

  for (Index start = 0; start < n; start += kSampleChunk) {
    const Index len = std::min(kSampleChunk, n - start);
    std::vector<RngStream> streams;
    streams.reserve(static_cast<std::size_t>(len));
    for (Index i = 0; i < len; ++i) streams.push_back(rng.fork(static_cast<std::uint64_t>(start + i)));

    Matrix<float> x(len, d);
    for (Index i = 0; i < len; ++i) streams[static_cast<std::size_t>(i)].fill_normal(x.row(i).data(), d);

    // Rows [0, len) unconditional, [len, 2 len) conditional, when both are needed.
    const Index branches = (need_uncond ? 1 : 0) + (need_cond ? 1 : 0);
    std::vector<int> users, ratings;
    if (need_uncond) {
      users.insert(users.end(), static_cast<std::size_t>(len), config.num_users);
      ratings.insert(ratings.end(), static_cast<std::size_t>(len), config.num_ratings);
    }
    if (need_cond) {
      users.insert(users.end(), static_cast<std::size_t>(len), options.user);
      ratings.insert(ratings.end(), static_cast<std::size_t>(len), options.rating);
    }
    Matrix<float> input(branches * len, d);

    for (std::size_t s = 0; s < ts.size(); ++s) {
      const int t = ts[s];
      const int prev = s + 1 < ts.size() ? ts[s + 1] : 0;
      for (Index b = 0; b < branches; ++b) input.middleRows(b * len, len) = x;
      const std::vector<int> steps(static_cast<std::size_t>(branches * len), t);
      const Matrix<float> pred = model.forward(input, steps, users, ratings, ws);
      Matrix<float> x0_hat;
      if (branches == 2)
        x0_hat = cfg_combine(pred.topRows(len), pred.bottomRows(len), omega);
      else
        x0_hat = pred;

      const auto post = schedule.posterior(t, prev);
      x = static_cast<float>(post.coef_x0) * x0_hat + static_cast<float>(post.coef_xt) * x;
      if (prev > 0) {
        const float sigma = static_cast<float>(std::sqrt(post.variance));
        for (Index i = 0; i < len; ++i)
          for (Index k = 0; k < d; ++k) x(i, k) += sigma * static_cast<float>(streams[static_cast<std::size_t>(i)].normal());
      }
    }
    if (!x.allFinite()) throw NumericError("sample: non-finite sample");
    result.middleRows(start, len) = x;
  }
  return result;
}

Embedding sample(const PriorModel<float>& model, const NoiseSchedule& schedule, const SampleOptions& options,
                 const RngStream& rng) {
  require(model.config().embedding_dim == kEmbeddingDim, "sample: embedding_dim must match the codec");
  const Matrix<float> m = sample_many(model, schedule, options, 1, rng);
  return Embedding(m.row(0).transpose());
}

}  // namespace prefdiff
