#pragma once

#include <span>
#include <vector>

#include "prefdiff/core/adam.hpp"
#include "prefdiff/nn/layers.hpp"
#include "prefdiff/world.hpp"

namespace prefdiff {

inline constexpr int kVerifierFeatureDim = 24;
inline constexpr int kVerifierUserDim = 16;
inline constexpr int kVerifierHidden = 64;

using VerifierFeatures = Eigen::Matrix<float, kVerifierFeatureDim, 1>;

/// Raw image statistics, computed from pixels only:
///   [0..1]   mean red and blue intensity of the foreground, in [0, 1]
///            (green is always zero in this world and is left out)
///   [2..3]   foreground centroid (x, y) as canvas fractions
///   [4..6]   central second moments xx, yy, xy in canvas-fraction units
///   [7]      boundary pixels / foreground pixels
///   [8..23]  4x4 occupancy grid, fraction of each cell that is foreground
/// The foreground area fraction equals the grid mean and is not repeated.
/// An all-black image maps to all zeros.
VerifierFeatures raw_image_features(const RenderedImage& image);

/// Per-feature affine standardization fitted on a calibration set of images.
struct FeatureStandardizer {
  VerifierFeatures mean = VerifierFeatures::Zero();
  VerifierFeatures scale = VerifierFeatures::Ones();

  /// Renders `count` uniformly random latents and records mean / std.
  static FeatureStandardizer calibrate(RngStream& rng, int count = 1000);
  VerifierFeatures apply(const VerifierFeatures& raw) const;
};

VerifierFeatures verifier_features(const RenderedImage& image, const FeatureStandardizer& standardizer);

/// v(U, I) = sigmoid(g([user_vector(U), features(I)])), g a one-hidden-layer
/// perceptron. Templated so the double instantiation can be grad-checked.
template <typename Scalar>
class VerifierNet {
 public:
  struct Cache {
    std::vector<int> users;
    Matrix<Scalar> input;
    typename nn::Mlp<Scalar>::Cache mlp;
  };

  VerifierNet()
      : user_table("verifier/user_table", kNumUsers, kVerifierUserDim),
        scorer("verifier/scorer", kVerifierUserDim + kVerifierFeatureDim, kVerifierHidden, 1) {}

  void initialize(RngStream& rng) {
    user_table.init_normal(rng, 0.1);
    scorer.init_xavier(rng);
  }

  /// Logits, one per row of `features` (batch, 24).
  Vector<Scalar> logits(const std::vector<int>& users, const Matrix<Scalar>& features, Cache& cache) const {
    require(static_cast<Index>(users.size()) == features.rows(), "verifier: user / feature count mismatch");
    require(features.cols() == kVerifierFeatureDim, "verifier: wrong feature width");
    for (int u : users) require(u >= 0 && u < kNumUsers, "verifier: unknown user id");
    cache.users = users;
    cache.input.resize(features.rows(), kVerifierUserDim + kVerifierFeatureDim);
    cache.input.leftCols(kVerifierUserDim) = user_table.forward(users);
    cache.input.rightCols(kVerifierFeatureDim) = features;
    return scorer.forward(cache.input, cache.mlp).col(0);
  }

  /// Accumulates parameter gradients given dL/d(logit).
  void backward(const Cache& cache, const Vector<Scalar>& dlogits) {
    const Matrix<Scalar> dinput = scorer.backward(cache.mlp, Matrix<Scalar>(dlogits));
    user_table.backward(cache.users, dinput.leftCols(kVerifierUserDim));
  }

  ParameterList<Scalar> parameters() {
    auto p = user_table.parameters();
    for (auto* q : scorer.parameters()) p.push_back(q);
    return p;
  }

  nn::Embedding<Scalar> user_table;
  nn::Mlp<Scalar> scorer;
};

struct VerifierConfig {
  int epochs = 60;
  int batch = 256;
  double lr = 1e-3;
  int calibration_images = 1000;
  int bootstrap = 200;
};

struct VerifierModel {
  VerifierNet<float> net;
  FeatureStandardizer standardizer;
};

struct AucEstimate {
  double auc = 0.0;
  double boot_se = 0.0;
};

struct VerifierReport {
  std::vector<double> epoch_loss;  // mean BCE per epoch
  AucEstimate train;
  AucEstimate test;
  double bayes_auc = 0.0;
};

struct TrainedVerifier {
  VerifierModel model;
  VerifierReport report;
};

/// Binary cross-entropy of probability p against label y in {0, 1}.
double binary_cross_entropy(double p, int label);

/// Mann-Whitney ROC-AUC; tied scores count one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Standard error of roc_auc over `resamples` bootstrap resamples.
double bootstrap_auc_se(std::span<const double> scores, std::span<const int> labels, int resamples, RngStream rng);

/// AUC of the Bayes-optimal scorer for the world's rating table, by exact
/// enumeration of the (match-count) cells.
double bayes_optimal_auc();

/// Adam on BCE over the training split. Test-split AUC is reported only.
TrainedVerifier train_verifier(std::span<const Interaction> train, std::span<const Interaction> test,
                               const VerifierConfig& config, const RngStream& rng);

double predict(const VerifierModel& model, int user_id, const RenderedImage& image);
std::vector<double> predict_batch(const VerifierModel& model, std::span<const int> users,
                                  std::span<const RenderedImage> images);

/// Sample mean of predict over each user's images (index = user id).
std::vector<double> mean_score(const VerifierModel& model, const std::vector<std::vector<RenderedImage>>& per_user);
inline std::vector<double> score_generator(const VerifierModel& model,
                                           const std::vector<std::vector<RenderedImage>>& per_user) {
  return mean_score(model, per_user);
}
/// Per-user median of predict; the statistic used by the permutation test.
std::vector<double> median_score(const VerifierModel& model, const std::vector<std::vector<RenderedImage>>& per_user);

double median(std::vector<double> values);

}  // namespace prefdiff
