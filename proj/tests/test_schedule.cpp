#include <doctest.h>

#include <cmath>
#include <numbers>

#include "prefdiff/core/rng.hpp"
#include "prefdiff/schedule.hpp"

using namespace prefdiff;

namespace {

// Independent long-double evaluation of the clipped cosine schedule.
long double oracle_alpha_bar(int t) {
  auto f = [](long double u) {
    const long double c = std::cos((u + 0.008L) / 1.008L * std::numbers::pi_v<long double> / 2);
    return c * c;
  };
  long double prod = 1;
  for (int s = 1; s <= t; ++s) {
    const long double beta = std::min(1 - f(s / 1000.0L) / f((s - 1) / 1000.0L), 0.999L);
    prod *= 1 - beta;
  }
  return prod;
}

}  // namespace

TEST_CASE("alpha_bar endpoints, monotonicity and oracle agreement") {
  NoiseSchedule s;
  CHECK(alpha_bar(s, 0) == 1.0);
  CHECK(alpha_bar(s, 1000) > 0.0);
  CHECK(alpha_bar(s, 1000) < 1e-3);
  for (int t = 0; t < 1000; ++t) CHECK(alpha_bar(s, t) > alpha_bar(s, t + 1));
  for (int t : {1, 10, 250, 500, 750, 990, 999, 1000})
    CHECK(alpha_bar(s, t) == doctest::Approx(static_cast<double>(oracle_alpha_bar(t))).epsilon(1e-9));
  CHECK_THROWS_AS(alpha_bar(s, -1), ContractViolation);
  CHECK_THROWS_AS(alpha_bar(s, 1001), ContractViolation);
}

TEST_CASE("posterior coefficients satisfy the Gaussian marginal identities") {
  NoiseSchedule s;
  for (int t = 1; t <= 1000; ++t) {
    const auto p = s.posterior(t, t - 1);
    const double ab_t = s.alpha_bar(t);
    const double ab_prev = s.alpha_bar(t - 1);
    CHECK(p.coef_x0 + p.coef_xt * std::sqrt(1.0 - s.beta(t)) <= 1.0 + 1e-5);
    // Mean and variance of x_{t-1} given x0 must equal the forward marginal.
    CHECK(p.coef_x0 + p.coef_xt * std::sqrt(ab_t) == doctest::Approx(std::sqrt(ab_prev)).epsilon(1e-9));
    CHECK(p.coef_xt * p.coef_xt * (1.0 - ab_t) + p.variance == doctest::Approx(1.0 - ab_prev).epsilon(1e-9));
  }
  const auto last = s.posterior(1, 0);
  CHECK(last.variance == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(last.coef_x0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("strided timesteps descend over 1..T") {
  NoiseSchedule s;
  const auto ts = s.strided_timesteps(64);
  REQUIRE(ts.size() == 64);
  CHECK(ts.front() == 1000);
  CHECK(ts.back() >= 1);
  for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
  CHECK(s.strided_timesteps(1000).back() == 1);
  CHECK_THROWS_AS(s.strided_timesteps(1001), ContractViolation);
}

TEST_CASE("forward_diffuse plug-in and empirical marginals") {
  NoiseSchedule s;
  Vector<double> x(2), e(2);
  x << 1.0, -2.0;
  e << 0.5, 0.25;
  // Pick the step whose alpha_bar is closest to 0.25 and check the formula with it.
  int t = 1;
  while (s.alpha_bar(t) > 0.25) ++t;
  const double ab = s.alpha_bar(t);
  const Vector<double> y = forward_diffuse(x, t, e, s);
  CHECK(y[0] == doctest::Approx(std::sqrt(ab) * 1.0 + std::sqrt(1 - ab) * 0.5));

  RngStream rng(9, "marginal");
  const int n = 100000;
  Vector<float> x0(4);
  x0 << 1.5f, -0.7f, 0.0f, 2.0f;
  for (int step : {10, 500, 990}) {
    Vector<double> sum = Vector<double>::Zero(4);
    for (int i = 0; i < n; ++i) sum += forward_diffuse(x0, step, rng.normal_vector<float>(4), s).cast<double>();
    const double a = s.alpha_bar(step);
    const double bound = 3.0 * std::sqrt((1.0 - a) / n);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(sum[k] / n - std::sqrt(a) * x0[k]) <= bound);
  }
}
