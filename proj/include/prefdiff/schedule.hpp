#pragma once

#include <cmath>
#include <vector>

#include "prefdiff/core/types.hpp"

namespace prefdiff {

/// Squared-cosine noise schedule ("squaredcos_cap_v2"):
/// beta_t = min(1 - f(t)/f(t-1), 0.999), f(t) = cos^2(((t/T + s)/(1 + s)) pi/2),
/// alpha_bar_t = prod_{s<=t} (1 - beta_s), alpha_bar_0 = 1.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(int steps = 1000, double offset = 0.008, double max_beta = 0.999);

  int steps() const { return steps_; }
  double offset() const { return offset_; }
  double max_beta() const { return max_beta_; }

  /// t in [0, T].
  double alpha_bar(int t) const;
  /// t in [1, T].
  double beta(int t) const;

  /// Coefficients of the Gaussian posterior q(x_prev | x_t, x0) for a jump
  /// from t down to prev < t (prev = t - 1 for the full chain).
  struct Posterior {
    double coef_x0;
    double coef_xt;
    double variance;
  };
  Posterior posterior(int t, int prev) const;

  /// `count` timesteps evenly strided over {1..T}, descending.
  std::vector<int> strided_timesteps(int count) const;

 private:
  int steps_;
  double offset_;
  double max_beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> beta_;
};

inline double alpha_bar(const NoiseSchedule& schedule, int t) { return schedule.alpha_bar(t); }

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise.
template <typename Scalar>
Vector<Scalar> forward_diffuse(const Vector<Scalar>& x0, int t, const Vector<Scalar>& noise,
                               const NoiseSchedule& schedule) {
  require(t >= 1 && t <= schedule.steps(), "forward_diffuse: timestep out of range");
  require(x0.size() == noise.size(), "forward_diffuse: noise size mismatch");
  const double ab = schedule.alpha_bar(t);
  return static_cast<Scalar>(std::sqrt(ab)) * x0 + static_cast<Scalar>(std::sqrt(1.0 - ab)) * noise;
}

}  // namespace prefdiff
