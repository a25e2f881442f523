#pragma once

#include <functional>
#include <span>
#include <vector>

#include "prefdiff/prior.hpp"
#include "prefdiff/schedule.hpp"
#include "prefdiff/world.hpp"

namespace prefdiff {

struct PriorTrainTrace {
  std::vector<double> epoch_loss;  // mean per-coordinate squared error over each epoch
  double initial_eval_loss = 0.0;  // fixed held-in evaluation batch, before the first step
  double final_eval_loss = 0.0;
};

struct TrainedPrior {
  PriorModel<float> model;
  NoiseSchedule schedule;
  PriorTrainTrace trace;
};

/// Called after every epoch with the model as it stands.
using EpochCallback = std::function<void(int epoch, double loss, const PriorModel<float>& model)>;

/// Builds the schedule for `config`.
NoiseSchedule make_schedule(const PriorConfig& config);

/// Mean per-coordinate squared error of x0-prediction on `data`, with timesteps
/// and noise drawn from `rng`. Conditioning is never dropped.
double prior_loss(const PriorModel<float>& model, const NoiseSchedule& schedule, std::span<const Interaction> data,
                  RngStream rng);

/// Adam on the x0-prediction objective. Each example gets a uniform timestep in
/// {1..T} and fresh Gaussian noise; with probability cond_dropout its user and
/// rating are both replaced by the null tokens.
TrainedPrior train_prior(std::span<const Interaction> data, const PriorConfig& config, const RngStream& rng,
                         const EpochCallback& on_epoch = {});

/// f0 + omega (f1 - f0). Exactly f0 at omega = 0 and exactly f1 at omega = 1.
template <typename Derived0, typename Derived1>
auto cfg_combine(const Eigen::MatrixBase<Derived0>& f0, const Eigen::MatrixBase<Derived1>& f1, float omega) {
  using Plain = typename Derived0::PlainObject;
  if (omega == 0.0f) return Plain(f0);
  if (omega == 1.0f) return Plain(f1);
  return Plain(f0 + omega * (f1 - f0));
}

struct SampleOptions {
  int user = 0;
  int rating = 1;
  double omega = 3.0;
  int steps = 64;
};

/// Guided ancestral sampling of n embeddings, batched. Sample i draws its
/// starting point and all step noise from rng.fork(i), so results depend only on
/// (rng, i) and the options. Returns (n, embedding_dim).
Matrix<float> sample_many(const PriorModel<float>& model, const NoiseSchedule& schedule, const SampleOptions& options,
                          Index n, const RngStream& rng);

/// Single sample; equivalent to row 0 of sample_many with n = 1.
Embedding sample(const PriorModel<float>& model, const NoiseSchedule& schedule, const SampleOptions& options,
                 const RngStream& rng);

}  // namespace prefdiff
