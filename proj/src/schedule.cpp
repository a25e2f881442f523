#include "prefdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prefdiff {

NoiseSchedule::NoiseSchedule(int steps, double offset, double max_beta)
    : steps_(steps), offset_(offset), max_beta_(max_beta) {
  require(steps >= 1, "noise schedule needs at least one step");
  auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  beta_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  for (int t = 1; t <= steps; ++t) {
    const double b = std::min(1.0 - f(t) / f(t - 1), max_beta);
    beta_[static_cast<std::size_t>(t)] = b;
    alpha_bar_[static_cast<std::size_t>(t)] = alpha_bar_[static_cast<std::size_t>(t) - 1] * (1.0 - b);
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  require(t >= 0 && t <= steps_, "alpha_bar: timestep out of range");
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::beta(int t) const {
  require(t >= 1 && t <= steps_, "beta: timestep out of range");
  return beta_[static_cast<std::size_t>(t)];
}

NoiseSchedule::Posterior NoiseSchedule::posterior(int t, int prev) const {
  require(t >= 1 && t <= steps_ && prev >= 0 && prev < t, "posterior: invalid timestep pair");
  const double ab_t = alpha_bar(t);
  const double ab_prev = alpha_bar(prev);
  const double alpha = ab_t / ab_prev;
  const double beta = 1.0 - alpha;
  return Posterior{
      std::sqrt(ab_prev) * beta / (1.0 - ab_t),
      std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab_t),
      beta * (1.0 - ab_prev) / (1.0 - ab_t),
  };
}

std::vector<int> NoiseSchedule::strided_timesteps(int count) const {
  require(count >= 1 && count <= steps_, "sampling step count must lie in [1, T]");
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(count));
  for (int i = count; i >= 1; --i)
    ts.push_back(static_cast<int>((static_cast<long long>(i) * steps_) / count));
  return ts;
}

}  // namespace prefdiff
