#include "prefdiff/navigate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prefdiff {

Embedding slerp(const Embedding& z0, const Embedding& z1, float t) {
  const double n0 = z0.cast<double>().norm();
  const double n1 = z1.cast<double>().norm();
  require(n0 > 0 && n1 > 0, "slerp: zero-norm input");
  require(t >= 0.0f && t <= 1.0f, "slerp: t must lie in [0, 1]");
  const Eigen::Matrix<double, kEmbeddingDim, 1> a = z0.cast<double>() / n0;
  const Eigen::Matrix<double, kEmbeddingDim, 1> b = z1.cast<double>() / n1;
  const double scale = std::sqrt(n0 * n1);
  const double theta = std::acos(std::clamp(a.dot(b), -1.0, 1.0));
  const double s = std::sin(theta);
  constexpr double kSmall = 1e-6;

  Eigen::Matrix<double, kEmbeddingDim, 1> out;
  if (theta < kSmall) {
    out = ((1.0 - t) * a + t * b).normalized();
  } else if (s < kSmall) {
    // Antipodal: every great circle works; take the one through the axis where a is smallest.
    Eigen::Index k = 0;
    a.cwiseAbs().minCoeff(&k);
    Eigen::Matrix<double, kEmbeddingDim, 1> u = Eigen::Matrix<double, kEmbeddingDim, 1>::Unit(k);
    u = (u - u.dot(a) * a).normalized();
    out = std::cos(t * std::numbers::pi) * a + std::sin(t * std::numbers::pi) * u;
  } else {
    out = (std::sin((1.0 - t) * theta) / s) * a + (std::sin(t * theta) / s) * b;
  }
  return (scale * out).cast<float>();
}

Trajectory trajectory(const Embedding& z0, const TrajectoryOptions& options, const PriorModel<float>& prior,
                      const NoiseSchedule& schedule, const VerifierModel& verifier, const CodecSpec& codec,
                      const std::vector<float>& ts, const RngStream& rng) {
  require(!ts.empty(), "trajectory: empty t sequence");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    require(ts[i] >= 0.0f && ts[i] <= 1.0f, "trajectory: t outside [0, 1]");
    require(i == 0 || ts[i] > ts[i - 1], "trajectory: t sequence must be strictly increasing");
  }
  require(options.best_of >= 1, "trajectory: best_of must be positive");

  SampleOptions so;
  so.user = options.user;
  so.rating = 1;
  so.omega = options.omega;
  so.steps = options.steps;
  const Matrix<float> candidates = sample_many(prior, schedule, so, options.best_of, rng.fork("target"));

  Trajectory out;
  out.best_of = options.best_of;
  out.target = candidates.row(0).transpose();
  if (options.best_of > 1) {
    double best = -1.0;
    for (Index i = 0; i < candidates.rows(); ++i) {
      const Embedding c = candidates.row(i).transpose();
      const double s = predict(verifier, options.user, decode_to_image(c, codec));
      if (s > best) {
        best = s;
        out.target = c;
      }
    }
  }

  for (float t : ts) {
    const Embedding p = slerp(z0, out.target, t);
    out.ts.push_back(t);
    out.points.push_back(p);
    out.latents.push_back(decode(p, codec));
    out.scores.push_back(predict(verifier, options.user, render(out.latents.back())));
  }
  return out;
}

}  // namespace prefdiff
