#pragma once

#include <vector>

#include "prefdiff/codec.hpp"
#include "prefdiff/diffusion.hpp"
#include "prefdiff/verifier.hpp"

namespace prefdiff {

/// Great-circle interpolation of the normalized inputs, rescaled by the
/// geometric mean of the input norms. Nearly parallel inputs fall back to a
/// normalized linear blend; exactly opposite inputs turn through a fixed
/// orthogonal direction.
Embedding slerp(const Embedding& z0, const Embedding& z1, float t);

struct Trajectory {
  std::vector<float> ts;
  std::vector<Embedding> points;
  std::vector<ShapeLatent> latents;
  std::vector<double> scores;
  Embedding target = Embedding::Zero();
  int best_of = 1;
};

struct TrajectoryOptions {
  int user = 0;
  double omega = 3.0;
  int steps = 64;
  int best_of = 1;  // z1 = highest-scoring of this many prior samples; 1 keeps the first draw
};

/// z1 is drawn from the prior for (user, liked); each point is decoded and
/// scored by the verifier for the same user.
Trajectory trajectory(const Embedding& z0, const TrajectoryOptions& options, const PriorModel<float>& prior,
                      const NoiseSchedule& schedule, const VerifierModel& verifier, const CodecSpec& codec,
                      const std::vector<float>& ts, const RngStream& rng);

}  // namespace prefdiff
