#include <doctest.h>

#include <cmath>

#include "prefdiff/navigate.hpp"

using namespace prefdiff;

namespace {

Embedding random_embedding(RngStream& rng, float scale = 1.0f) {
  Embedding e;
  rng.fill_normal(e.data(), kEmbeddingDim);
  return scale * e;
}

}  // namespace

TEST_CASE("slerp endpoints, norm convention and symmetry") {
  RngStream rng(51, "slerp");
  for (int trial = 0; trial < 20; ++trial) {
    const Embedding a = random_embedding(rng, 0.5f);
    const Embedding b = random_embedding(rng, 2.0f);
    const double scale = std::sqrt(a.norm() * b.norm());
    CHECK((slerp(a, b, 0.0f) - a.normalized() * scale).norm() < 1e-5);
    CHECK((slerp(a, b, 1.0f) - b.normalized() * scale).norm() < 1e-5);
    for (float t : {0.1f, 0.3f, 0.5f, 0.77f}) {
      CHECK(std::abs(slerp(a, b, t).norm() - scale) < 1e-5 * scale);
      CHECK((slerp(a, b, t) - slerp(b, a, 1.0f - t)).cwiseAbs().maxCoeff() < 1e-6 * scale);
      CHECK(std::abs(slerp(a.normalized(), b.normalized(), t).norm() - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("slerp of orthonormal vectors at the midpoint") {
  const Embedding a = Embedding::Unit(0);
  const Embedding b = Embedding::Unit(5);
  const Embedding m = slerp(a, b, 0.5f);
  CHECK((m - (a + b) / std::sqrt(2.0f)).norm() < 1e-6);
  CHECK(std::abs(m.norm() - 1.0f) < 1e-6);
}

TEST_CASE("slerp degenerate angles and invalid input") {
  RngStream rng(52, "degenerate");
  const Embedding a = random_embedding(rng);
  const Embedding same = slerp(a, 3.0f * a, 0.4f);
  CHECK((same.normalized() - a.normalized()).norm() < 1e-5);
  CHECK(std::abs(same.norm() - std::sqrt(3.0f) * a.norm()) < 1e-4);
  const Embedding opposite = slerp(a, -a, 0.5f);
  CHECK(opposite.allFinite());
  CHECK(std::abs(opposite.norm() - a.norm()) < 1e-4);
  CHECK(std::abs(opposite.dot(a)) < 1e-4);
  CHECK_THROWS_AS(slerp(Embedding::Zero(), a, 0.5f), ContractViolation);
  CHECK_THROWS_AS(slerp(a, a, 1.5f), ContractViolation);
}

TEST_CASE("trajectory bookkeeping with untrained models") {
  RngStream rng(53, "traj");
  PriorConfig cfg;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.hidden = 16;
  cfg.tokens = 4;
  PriorModel<float> prior(cfg);
  prior.initialize(rng);
  const NoiseSchedule schedule(cfg.steps_train);
  VerifierModel verifier;
  verifier.net.initialize(rng);
  const CodecSpec codec = CodecSpec::create(5);
  const ShapeLatent source{Shape::Square, Color::Blue, 0.3f, 0.6f, 0.9f};
  const Embedding z0 = encode(source, codec);
  TrajectoryOptions opt;
  opt.user = 0;
  opt.steps = 4;

  const Trajectory single = trajectory(z0, opt, prior, schedule, verifier, codec, {0.0f}, RngStream(1, "t"));
  REQUIRE(single.points.size() == 1);
  const double scale = std::sqrt(z0.norm() * single.target.norm());
  CHECK((single.points[0] - z0.normalized() * scale).norm() < 1e-5);
  CHECK(single.scores[0] == predict(verifier, 0, render(single.latents[0])));

  const std::vector<float> ts{0.0f, 0.1f, 0.2f, 0.3f, 0.4f};
  const Trajectory t = trajectory(z0, opt, prior, schedule, verifier, codec, ts, RngStream(1, "t"));
  CHECK(t.ts.size() == 5);
  CHECK(t.points.size() == 5);
  CHECK(t.latents.size() == 5);
  CHECK(t.scores.size() == 5);
  CHECK(t.target == single.target);
  for (double s : t.scores) CHECK((s > 0.0 && s < 1.0));

  opt.best_of = 3;
  const Trajectory best = trajectory(z0, opt, prior, schedule, verifier, codec, ts, RngStream(1, "t"));
  CHECK(best.best_of == 3);
  CHECK(predict(verifier, 0, decode_to_image(best.target, codec)) >=
        predict(verifier, 0, decode_to_image(t.target, codec)));

  CHECK_THROWS_AS(trajectory(z0, opt, prior, schedule, verifier, codec, {0.4f, 0.0f}, RngStream(1, "t")),
                  ContractViolation);
}
