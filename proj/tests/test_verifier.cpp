#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefdiff/codec.hpp"
#include "prefdiff/core/gradcheck.hpp"
#include "prefdiff/verifier.hpp"

using namespace prefdiff;

namespace {

struct Fixture {
  DatasetSplit data;
  TrainedVerifier verifier;
};

const Fixture& trained() {
  static const Fixture f = [] {
    Fixture out;
    RngStream rng(31, "verifier-test");
    RngStream world = rng.fork("world");
    out.data = sample_dataset(40000, world);
    out.verifier = train_verifier(out.data.train, out.data.test, VerifierConfig{}, rng.fork("verifier"));
    return out;
  }();
  return f;
}

}  // namespace

TEST_CASE("bce and auc closed forms") {
  CHECK(binary_cross_entropy(0.5, 1) == doctest::Approx(std::log(2.0)));
  CHECK(binary_cross_entropy(0.5, 0) == doctest::Approx(std::log(2.0)));
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> l{0, 0, 1, 1};
  CHECK(roc_auc(s, l) == doctest::Approx(0.75));
  const std::vector<double> tie{0.5, 0.5, 0.5, 0.5};
  CHECK(roc_auc(tie, l) == doctest::Approx(0.5));
  const std::vector<int> one_class{1, 1, 1, 1};
  CHECK_THROWS_AS(roc_auc(s, one_class), ContractViolation);
}

TEST_CASE("bayes-optimal AUC of the rating table") {
  // Positives and negatives per cell, weights 1/4, 1/2, 1/4 over match counts.
  const double pos[3] = {0.25 * 0.95 / 0.3, 0.5 * 0.10 / 0.3, 0.25 * 0.05 / 0.3};
  const double neg[3] = {0.25 * 0.05 / 0.7, 0.5 * 0.90 / 0.7, 0.25 * 0.95 / 0.7};
  const double expected = pos[0] * (neg[1] + neg[2]) + pos[1] * neg[2] +
                          0.5 * (pos[0] * neg[0] + pos[1] * neg[1] + pos[2] * neg[2]);
  CHECK(bayes_optimal_auc() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(bayes_optimal_auc() == doctest::Approx(0.9018).epsilon(1e-3));
}

TEST_CASE("image features: degenerate input, determinism, colour block") {
  const RenderedImage black;
  CHECK(raw_image_features(black).isZero());
  const ShapeLatent a{Shape::Square, Color::Red, 0.35f, 0.6f, 0.7f};
  ShapeLatent b = a;
  b.color = Color::Blue;
  const VerifierFeatures fa = raw_image_features(render(a));
  const VerifierFeatures fb = raw_image_features(render(b));
  CHECK(fa == raw_image_features(render(a)));
  CHECK(fa[0] == 1.0f);
  CHECK(fa[1] == 0.0f);
  CHECK(fb[0] == 0.0f);
  CHECK(fb[1] == 1.0f);
  CHECK(fa.tail<22>() == fb.tail<22>());
  CHECK(fa.segment<16>(8).mean() > 0.0f);
  // Hearts have a different boundary / occupancy signature.
  ShapeLatent h = a;
  h.shape = Shape::Heart;
  CHECK((raw_image_features(render(h)).tail<17>() - fa.tail<17>()).norm() > 0.1f);
}

TEST_CASE("standardizer centres the calibration distribution") {
  RngStream rng(32, "calib");
  const FeatureStandardizer s = FeatureStandardizer::calibrate(rng, 1000);
  RngStream again(32, "calib");
  CHECK(FeatureStandardizer::calibrate(again, 1000).mean == s.mean);
  CHECK(s.scale.minCoeff() > 0.0f);
  RngStream fresh(33, "fresh");
  Eigen::Matrix<double, kVerifierFeatureDim, 1> mean = decltype(mean)::Zero();
  for (int i = 0; i < 2000; ++i) mean += verifier_features(render(random_latent(fresh)), s).cast<double>();
  mean /= 2000;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("verifier network passes grad_check") {
  RngStream rng(34, "vgrad");
  VerifierNet<double> net;
  net.initialize(rng);
  Matrix<double> x(5, kVerifierFeatureDim);
  rng.fill_normal(x.data(), x.size());
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
  for (auto* p : net.parameters()) p->zero_grad();
  net.backward(cache, d);
  CHECK(grad_check_parameters<double>(net.parameters(), loss, 1e-5) < 1e-4);
  std::vector<int> bad{0, 1, 2, 3, 4};
  CHECK_THROWS_AS(net.logits(bad, x, cache), ContractViolation);
}

TEST_CASE("trained verifier approaches the Bayes ceiling and agrees with the rating table") {
  const auto& f = trained();
  const auto& r = f.verifier.report;
  MESSAGE("train AUC " << r.train.auc << " +- " << r.train.boot_se << ", test AUC " << r.test.auc << " +- "
                       << r.test.boot_se << ", Bayes " << r.bayes_auc);
  CHECK(r.train.auc > 0.88);
  CHECK(r.test.auc > 0.88);
  CHECK(r.train.boot_se > 0.0);
  CHECK(r.test.boot_se > r.train.boot_se);
  for (std::size_t e = 1; e < 5 && e < r.epoch_loss.size(); ++e) CHECK(r.epoch_loss[e] < r.epoch_loss[e - 1]);

  const auto& model = f.verifier.model;
  for (int u = 0; u < kNumUsers; ++u) {
    const UserProfile p = user_profile(u);
    const ShapeLatent liked{p.preferred_shape, p.preferred_color, 0.4f, 0.55f, 0.8f};
    const ShapeLatent disliked{p.preferred_shape == Shape::Heart ? Shape::Square : Shape::Heart,
                               p.preferred_color == Color::Red ? Color::Blue : Color::Red, 0.4f, 0.55f, 0.8f};
    const double hi = predict(model, u, render(liked));
    CHECK(hi > 0.5);
    CHECK(predict(model, u, render(disliked)) < 0.5);
    CHECK(hi == predict(model, u, render(liked)));
    CHECK(hi > 0.0);
    CHECK(hi < 1.0);
  }
  CHECK_THROWS_AS(predict(model, 4, render(ShapeLatent{})), ContractViolation);
}

TEST_CASE("per-user scores: identical samples and the random baseline") {
  const auto& model = trained().verifier.model;
  const RenderedImage img = render(ShapeLatent{Shape::Heart, Color::Blue, 0.5f, 0.5f, 0.6f});
  const auto same = mean_score(model, {std::vector<RenderedImage>(5, img)});
  CHECK(same[0] == doctest::Approx(predict(model, 0, img)).epsilon(1e-6));
  CHECK(median_score(model, {std::vector<RenderedImage>(4, img)})[0] == doctest::Approx(predict(model, 0, img)));
  CHECK_THROWS_AS(mean_score(model, {std::vector<RenderedImage>{}}), ContractViolation);

  RngStream rng(35, "random-images");
  std::vector<std::vector<RenderedImage>> per_user(kNumUsers);
  for (auto& v : per_user)
    for (int i = 0; i < 1000; ++i) v.push_back(render(random_latent(rng)));
  for (double s : score_generator(model, per_user)) CHECK(std::abs(s - 0.30) < 0.03);
}

TEST_CASE("verifier never reads codec embeddings") {
  const auto& f = trained();
  std::vector<Interaction> items(f.data.test.begin(), f.data.test.begin() + 50);
  std::vector<RenderedImage> images;
  std::vector<int> users;
  for (const auto& it : items) {
    images.push_back(render(it.latent));
    users.push_back(it.user_id);
  }
  const auto before = predict_batch(f.verifier.model, users, images);
  // Corrupting every embedding leaves the verifier's inputs and outputs untouched.
  CodecSpec spec = CodecSpec::create(1);
  spec.projection.setConstant(3.0f);
  for (auto& it : items) it.embedding = spec.projection * latent_features(it.latent);
  CHECK(predict_batch(f.verifier.model, users, images) == before);
}

TEST_CASE("calibration: like rate rises across prediction deciles") {
  const auto& f = trained();
  std::vector<std::pair<double, int>> pr;
  std::vector<RenderedImage> images;
  std::vector<int> users;
  for (const auto& it : f.data.train) {
    images.push_back(render(it.latent));
    users.push_back(it.user_id);
  }
  const auto p = predict_batch(f.verifier.model, users, images);
  for (std::size_t i = 0; i < p.size(); ++i) pr.push_back({p[i], f.data.train[i].rating});
  std::sort(pr.begin(), pr.end());
  std::vector<double> rate(10, 0.0), mean_p(10, 0.0);
  const std::size_t per = pr.size() / 10;
  for (std::size_t b = 0; b < 10; ++b) {
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      rate[b] += pr[i].second;
      mean_p[b] += pr[i].first;
    }
    rate[b] /= per;
    mean_p[b] /= per;
  }
  // Spearman correlation between decile index and empirical like rate.
  std::vector<std::size_t> idx(10);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return rate[a] < rate[b]; });
  std::vector<double> rank(10);
  for (std::size_t r = 0; r < 10; ++r) rank[idx[r]] = static_cast<double>(r);
  double d2 = 0;
  for (std::size_t b = 0; b < 10; ++b) d2 += (rank[b] - b) * (rank[b] - b);
  const double rho = 1 - 6 * d2 / (10.0 * 99.0);
  MESSAGE("decile like rates: " << rate[0] << " ... " << rate[9] << ", spearman " << rho);
  CHECK(rho > 0.9);
  CHECK(rate[9] > rate[0]);
}
