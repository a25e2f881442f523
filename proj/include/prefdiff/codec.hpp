#pragma once

#include <cstdint>

#include "prefdiff/world.hpp"

namespace prefdiff {

inline constexpr int kFeatureDim = 14;

using FeatureVector = Eigen::Matrix<float, kFeatureDim, 1>;
using ProjectionMatrix = Eigen::Matrix<float, kEmbeddingDim, kFeatureDim>;

/// Frozen analytic embedding space. A latent's feature vector phi (14 values)
/// is mapped into 32 dimensions by a projection with orthonormal columns, so
/// Euclidean distances between embeddings equal distances between features.
///
/// phi layout, each block scaled to unit maximum norm:
///   [0..1]   one-hot shape (heart, square)
///   [2..3]   one-hot color (red, blue)
///   [4..11]  0.5 * sin/cos of 2 pi k pos_x and 2 pi k pos_y, k = 1, 2
///            ordered (sin x, cos x, sin y, cos y) for k = 1, then k = 2
///   [12..13] (scale, scale^2) / sqrt(2)
struct CodecSpec {
  static constexpr int kLayoutVersion = 1;

  ProjectionMatrix projection = ProjectionMatrix::Zero();
  double norm_bound = 2.0;
  std::uint64_t seed = 0;

  /// Orthonormalizes a seeded Gaussian 32x14 matrix (Householder QR).
  static CodecSpec create(std::uint64_t seed);
};

FeatureVector latent_features(const ShapeLatent& latent);

Embedding encode(const ShapeLatent& latent, const CodecSpec& spec);

/// Total inverse. Shape and color by argmax over their blocks (ties go to
/// heart / red); positions by atan2 per frequency, averaged; scale from the
/// linear term. Degenerate position blocks decode to the range midpoint, and
/// all continuous factors are clamped to their valid ranges.
ShapeLatent decode(const Embedding& embedding, const CodecSpec& spec);

RenderedImage decode_to_image(const Embedding& embedding, const CodecSpec& spec);

/// Fills Interaction::embedding for every item.
void encode_all(std::vector<Interaction>& items, const CodecSpec& spec);
void encode_all(DatasetSplit& split, const CodecSpec& spec);

}  // namespace prefdiff
