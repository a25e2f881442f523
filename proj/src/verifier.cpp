#include "prefdiff/verifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace prefdiff {

VerifierFeatures raw_image_features(const RenderedImage& image) {
  constexpr int W = RenderedImage::kWidth;
  constexpr int H = RenderedImage::kHeight;
  VerifierFeatures f = VerifierFeatures::Zero();
  double area = 0, sum_r = 0, sum_b = 0, sx = 0, sy = 0;
  int boundary = 0;
  std::array<double, 16> grid{};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!image.foreground(x, y)) continue;
      const auto* p = image.at(x, y);
      area += 1;
      sum_r += p[0];
      sum_b += p[2];
      sx += x + 0.5;
      sy += y + 0.5;
      const bool edge = x == 0 || y == 0 || x == W - 1 || y == H - 1 || !image.foreground(x - 1, y) ||
                        !image.foreground(x + 1, y) || !image.foreground(x, y - 1) || !image.foreground(x, y + 1);
      boundary += edge;
      grid[static_cast<std::size_t>((y * 4 / H) * 4 + x * 4 / W)] += 1;
    }
  }
  if (area == 0) return f;
  const double cx = sx / area, cy = sy / area;
  double mxx = 0, myy = 0, mxy = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      if (image.foreground(x, y)) {
        const double dx = (x + 0.5 - cx) / W, dy = (y + 0.5 - cy) / H;
        mxx += dx * dx;
        myy += dy * dy;
        mxy += dx * dy;
      }
  f[0] = static_cast<float>(sum_r / (255.0 * area));
  f[1] = static_cast<float>(sum_b / (255.0 * area));
  f[2] = static_cast<float>(cx / W);
  f[3] = static_cast<float>(cy / H);
  f[4] = static_cast<float>(mxx / area);
  f[5] = static_cast<float>(myy / area);
  f[6] = static_cast<float>(mxy / area);
  f[7] = static_cast<float>(boundary / area);
  const double cell = static_cast<double>(W / 4) * (H / 4);
  for (int i = 0; i < 16; ++i) f[8 + i] = static_cast<float>(grid[static_cast<std::size_t>(i)] / cell);
  return f;
}

FeatureStandardizer FeatureStandardizer::calibrate(RngStream& rng, int count) {
  require(count >= 2, "feature calibration needs at least two images");
  Eigen::Matrix<double, kVerifierFeatureDim, 1> sum = decltype(sum)::Zero();
  Eigen::Matrix<double, kVerifierFeatureDim, 1> sq = decltype(sq)::Zero();
  for (int i = 0; i < count; ++i) {
    const auto raw = raw_image_features(render(random_latent(rng))).cast<double>();
    sum += raw;
    sq += raw.cwiseProduct(raw);
  }
  FeatureStandardizer s;
  const auto mean = sum / count;
  const auto var = (sq / count - mean.cwiseProduct(mean)).cwiseMax(0.0);
  s.mean = mean.cast<float>();
  for (int i = 0; i < kVerifierFeatureDim; ++i) {
    const double sd = std::sqrt(var[i]);
    s.scale[i] = static_cast<float>(sd > 1e-8 ? sd : 1.0);
  }
  return s;
}

VerifierFeatures FeatureStandardizer::apply(const VerifierFeatures& raw) const {
  return (raw - mean).cwiseQuotient(scale);
}

VerifierFeatures verifier_features(const RenderedImage& image, const FeatureStandardizer& standardizer) {
  return standardizer.apply(raw_image_features(image));
}

double binary_cross_entropy(double p, int label) {
  constexpr double kFloor = 1e-12;
  return label == 1 ? -std::log(std::max(p, kFloor)) : -std::log(std::max(1.0 - p, kFloor));
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), "roc_auc: score / label count mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  require(pos > 0 && neg > 0, "roc_auc: need both classes");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1) / 2) / (p * static_cast<double>(neg));
}

double bootstrap_auc_se(std::span<const double> scores, std::span<const int> labels, int resamples, RngStream rng) {
  require(resamples >= 2, "bootstrap needs at least two resamples");
  const std::size_t n = scores.size();
  std::vector<double> s(n);
  std::vector<int> l(n);
  double sum = 0, sq = 0;
  int used = 0;
  for (int b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.below(n));
      s[i] = scores[j];
      l[i] = labels[j];
    }
    const auto pos = std::count(l.begin(), l.end(), 1);
    if (pos == 0 || pos == static_cast<long>(n)) continue;
    const double a = roc_auc(s, l);
    sum += a;
    sq += a * a;
    ++used;
  }
  require(used >= 2, "bootstrap: too few resamples with both classes");
  const double mean = sum / used;
  return std::sqrt(std::max(0.0, (sq - used * mean * mean) / (used - 1)));
}

double bayes_optimal_auc() {
  // Cells by number of mismatched factors; every user sees the same table.
  const std::array<double, 3> weight{0.25, 0.5, 0.25};
  const UserProfile user = user_profile(0);
  const std::array<ShapeLatent, 3> reps{
      ShapeLatent{user.preferred_shape, user.preferred_color},
      ShapeLatent{user.preferred_shape, user.preferred_color == Color::Red ? Color::Blue : Color::Red},
      ShapeLatent{user.preferred_shape == Shape::Heart ? Shape::Square : Shape::Heart,
                  user.preferred_color == Color::Red ? Color::Blue : Color::Red}};
  std::array<double, 3> pos{}, neg{}, prob{};
  double zp = 0, zn = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    prob[c] = preference_prob(user, reps[c]);
    pos[c] = weight[c] * prob[c];
    neg[c] = weight[c] * (1 - prob[c]);
    zp += pos[c];
    zn += neg[c];
  }
  double auc = 0;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      const double w = pos[a] / zp * neg[b] / zn;
      if (prob[a] > prob[b]) auc += w;
      else if (prob[a] == prob[b]) auc += 0.5 * w;
    }
  return auc;
}

namespace {

double logistic(double logit) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

Matrix<float> feature_matrix(std::span<const Interaction> items, const FeatureStandardizer& standardizer) {
  Matrix<float> m(static_cast<Index>(items.size()), kVerifierFeatureDim);
  for (std::size_t i = 0; i < items.size(); ++i)
    m.row(static_cast<Index>(i)) = verifier_features(render(items[i].latent), standardizer).transpose();
  return m;
}

std::vector<double> predict_rows(const VerifierNet<float>& net, const std::vector<int>& users,
                                 const Matrix<float>& features) {
  std::vector<double> out;
  out.reserve(users.size());
  typename VerifierNet<float>::Cache cache;
  constexpr Index kChunk = 4096;
  for (Index start = 0; start < features.rows(); start += kChunk) {
    const Index len = std::min(kChunk, features.rows() - start);
    const std::vector<int> u(users.begin() + start, users.begin() + start + len);
    const Vector<float> l = net.logits(u, features.middleRows(start, len), cache);
    for (Index i = 0; i < len; ++i) out.push_back(logistic(l[i]));
  }
  return out;
}

AucEstimate evaluate_auc(const VerifierNet<float>& net, std::span<const Interaction> items, const Matrix<float>& f,
                         int bootstrap, const RngStream& rng) {
  std::vector<int> users, labels;
  for (const auto& it : items) {
    users.push_back(it.user_id);
    labels.push_back(it.rating);
  }
  const std::vector<double> p = predict_rows(net, users, f);
  return {roc_auc(p, labels), bootstrap_auc_se(p, labels, bootstrap, rng)};
}

}  // namespace

TrainedVerifier train_verifier(std::span<const Interaction> train, std::span<const Interaction> test,
                               const VerifierConfig& config, const RngStream& rng) {
  require(!train.empty(), "train_verifier: empty training data");
  require(config.epochs >= 1 && config.batch >= 1 && config.lr > 0, "train_verifier: invalid hyperparameters");
  TrainedVerifier out;
  RngStream calib = rng.fork("calibration");
  out.model.standardizer = FeatureStandardizer::calibrate(calib, config.calibration_images);
  RngStream init = rng.fork("init");
  out.model.net.initialize(init);

  const Matrix<float> features = feature_matrix(train, out.model.standardizer);
  AdamHyper hyper;
  hyper.learning_rate = config.lr;
  AdamOptimizer<float> adam(out.model.net.parameters(), hyper);
  typename VerifierNet<float>::Cache cache;
  std::vector<std::size_t> order(train.size());
  const RngStream epochs = rng.fork("epochs");
  const auto batch = static_cast<std::size_t>(config.batch);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffler = epochs.fork(static_cast<std::uint64_t>(epoch));
    shuffler.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      std::vector<int> users(len);
      Matrix<float> x(static_cast<Index>(len), kVerifierFeatureDim);
      Vector<float> y(static_cast<Index>(len));
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t k = order[start + i];
        users[i] = train[k].user_id;
        x.row(static_cast<Index>(i)) = features.row(static_cast<Index>(k));
        y[static_cast<Index>(i)] = static_cast<float>(train[k].rating);
      }
      const Vector<float> logits = out.model.net.logits(users, x, cache);
      Vector<float> dlogits(static_cast<Index>(len));
      for (Index i = 0; i < dlogits.size(); ++i) {
        const double p = logistic(logits[i]);
        total += binary_cross_entropy(p, static_cast<int>(y[i]));
        dlogits[i] = static_cast<float>((p - y[i]) / static_cast<double>(len));
      }
      adam.zero_grad();
      out.model.net.backward(cache, dlogits);
      adam.step();
    }
    out.report.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }

  out.report.train = evaluate_auc(out.model.net, train, features, config.bootstrap, rng.fork("boot-train"));
  if (!test.empty())
    out.report.test = evaluate_auc(out.model.net, test, feature_matrix(test, out.model.standardizer), config.bootstrap,
                                   rng.fork("boot-test"));
  out.report.bayes_auc = bayes_optimal_auc();
  return out;
}

std::vector<double> predict_batch(const VerifierModel& model, std::span<const int> users,
                                  std::span<const RenderedImage> images) {
  require(users.size() == images.size(), "predict: user / image count mismatch");
  Matrix<float> f(static_cast<Index>(images.size()), kVerifierFeatureDim);
  for (std::size_t i = 0; i < images.size(); ++i)
    f.row(static_cast<Index>(i)) = verifier_features(images[i], model.standardizer).transpose();
  return predict_rows(model.net, std::vector<int>(users.begin(), users.end()), f);
}

double predict(const VerifierModel& model, int user_id, const RenderedImage& image) {
  const int u[1] = {user_id};
  return predict_batch(model, u, std::span(&image, 1)).front();
}

namespace {

std::vector<std::vector<double>> per_user_predictions(const VerifierModel& model,
                                                      const std::vector<std::vector<RenderedImage>>& per_user) {
  require(per_user.size() <= static_cast<std::size_t>(kNumUsers), "score: more sample sets than users");
  std::vector<std::vector<double>> out;
  for (std::size_t u = 0; u < per_user.size(); ++u) {
    require(!per_user[u].empty(), "score: empty sample set for a user");
    const std::vector<int> users(per_user[u].size(), static_cast<int>(u));
    out.push_back(predict_batch(model, users, per_user[u]));
  }
  return out;
}

}  // namespace

std::vector<double> mean_score(const VerifierModel& model, const std::vector<std::vector<RenderedImage>>& per_user) {
  std::vector<double> out;
  for (const auto& p : per_user_predictions(model, per_user))
    out.push_back(std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size()));
  return out;
}

std::vector<double> median_score(const VerifierModel& model, const std::vector<std::vector<RenderedImage>>& per_user) {
  std::vector<double> out;
  for (auto& p : per_user_predictions(model, per_user)) out.push_back(median(std::move(p)));
  return out;
}

double median(std::vector<double> values) {
  require(!values.empty(), "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace prefdiff
