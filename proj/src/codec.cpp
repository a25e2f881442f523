#include "prefdiff/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace prefdiff {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr float kSinusoidScale = 0.5f;
const float kScaleBlockScale = static_cast<float>(1.0 / std::numbers::sqrt2);

double wrap_unit(double x) { return x - std::floor(x); }

// Position in [0, 1) from the two frequency pairs of one coordinate.
double decode_position(double sin1, double cos1, double sin2, double cos2) {
  constexpr double kDegenerate = 1e-9;
  const bool has1 = std::hypot(sin1, cos1) > kDegenerate;
  const bool has2 = std::hypot(sin2, cos2) > kDegenerate;
  if (!has1 && !has2) return 0.5;
  const double p2 = has2 ? wrap_unit(std::atan2(sin2, cos2) / (2.0 * kTwoPi)) : 0.0;  // in [0, 0.5)
  if (!has1) {
    // Frequency 2 alone is ambiguous by half a period; take the candidate nearest the centre.
    return std::abs(p2 - 0.5) <= p2 ? p2 : p2 + 0.5;
  }
  const double p1 = wrap_unit(std::atan2(sin1, cos1) / kTwoPi);
  if (!has2) return p1;
  // Pick the frequency-2 candidate closest to p1 on the circle, then average.
  double best = p2;
  double best_dist = 2.0;
  for (double cand : {p2, p2 + 0.5}) {
    for (double shift : {-1.0, 0.0, 1.0}) {
      const double c = cand + shift;
      if (std::abs(c - p1) < best_dist) {
        best_dist = std::abs(c - p1);
        best = c;
      }
    }
  }
  return 0.5 * (p1 + best);
}

}  // namespace

CodecSpec CodecSpec::create(std::uint64_t seed) {
  RngStream rng(seed, "codec");
  Eigen::Matrix<double, kEmbeddingDim, kFeatureDim> gaussian;
  for (Index i = 0; i < gaussian.size(); ++i) gaussian.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::Matrix<double, kEmbeddingDim, kFeatureDim>> qr(gaussian);
  const Eigen::Matrix<double, kEmbeddingDim, kEmbeddingDim> q = qr.householderQ();
  CodecSpec spec;
  spec.projection = q.leftCols<kFeatureDim>().cast<float>();
  spec.seed = seed;
  spec.norm_bound = 2.0;  // sqrt(1 + 1 + 1 + 1): every block has unit maximum norm
  return spec;
}

FeatureVector latent_features(const ShapeLatent& latent) {
  FeatureVector phi = FeatureVector::Zero();
  phi[latent.shape == Shape::Heart ? 0 : 1] = 1.0f;
  phi[latent.color == Color::Red ? 2 : 3] = 1.0f;
  int k = 4;
  for (int freq = 1; freq <= 2; ++freq) {
    const double ax = kTwoPi * freq * latent.pos_x;
    const double ay = kTwoPi * freq * latent.pos_y;
    phi[k++] = kSinusoidScale * static_cast<float>(std::sin(ax));
    phi[k++] = kSinusoidScale * static_cast<float>(std::cos(ax));
    phi[k++] = kSinusoidScale * static_cast<float>(std::sin(ay));
    phi[k++] = kSinusoidScale * static_cast<float>(std::cos(ay));
  }
  phi[12] = kScaleBlockScale * latent.scale;
  phi[13] = kScaleBlockScale * latent.scale * latent.scale;
  return phi;
}

Embedding encode(const ShapeLatent& latent, const CodecSpec& spec) {
  require(latent.valid(), "encode: latent outside its valid ranges");
  return spec.projection * latent_features(latent);
}

ShapeLatent decode(const Embedding& embedding, const CodecSpec& spec) {
  require(embedding.allFinite(), "decode: non-finite embedding");
  const Eigen::Matrix<double, kFeatureDim, 1> phi = (spec.projection.transpose() * embedding).cast<double>();
  ShapeLatent out;
  out.shape = phi[1] > phi[0] ? Shape::Square : Shape::Heart;
  out.color = phi[3] > phi[2] ? Color::Blue : Color::Red;
  const double px = decode_position(phi[4], phi[5], phi[8], phi[9]);
  const double py = decode_position(phi[6], phi[7], phi[10], phi[11]);
  out.pos_x = std::clamp(static_cast<float>(px), ShapeLatent::kPosMin, ShapeLatent::kPosMax);
  out.pos_y = std::clamp(static_cast<float>(py), ShapeLatent::kPosMin, ShapeLatent::kPosMax);
  out.scale = std::clamp(static_cast<float>(phi[12] * std::numbers::sqrt2), ShapeLatent::kScaleMin,
                         ShapeLatent::kScaleMax);
  return out;
}

RenderedImage decode_to_image(const Embedding& embedding, const CodecSpec& spec) {
  return render(decode(embedding, spec));
}

void encode_all(std::vector<Interaction>& items, const CodecSpec& spec) {
  for (auto& it : items) it.embedding = encode(it.latent, spec);
}

void encode_all(DatasetSplit& split, const CodecSpec& spec) {
  encode_all(split.train, spec);
  encode_all(split.test, spec);
}

}  // namespace prefdiff
