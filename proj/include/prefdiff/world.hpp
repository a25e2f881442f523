#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "prefdiff/core/rng.hpp"

namespace prefdiff {

inline constexpr int kEmbeddingDim = 32;
inline constexpr int kNumUsers = 4;

using Embedding = Eigen::Matrix<float, kEmbeddingDim, 1>;

enum class Shape : std::uint8_t { Heart = 0, Square = 1 };
enum class Color : std::uint8_t { Red = 0, Blue = 1 };

const char* to_string(Shape s);
const char* to_string(Color c);

/// Ground-truth generative factors of one synthetic image.
struct ShapeLatent {
  Shape shape = Shape::Heart;
  Color color = Color::Red;
  float pos_x = 0.5f;  // fraction of canvas width, [0.2, 0.8]
  float pos_y = 0.5f;  // fraction of canvas height, [0.2, 0.8]
  float scale = 0.75f;  // fraction of the maximum extent, [0.5, 1.0]

  static constexpr float kPosMin = 0.2f, kPosMax = 0.8f;
  static constexpr float kScaleMin = 0.5f, kScaleMax = 1.0f;

  bool valid() const;
  friend bool operator==(const ShapeLatent&, const ShapeLatent&) = default;
};

/// 64x64 RGB, row-major, 3 bytes per pixel.
struct RenderedImage {
  static constexpr int kWidth = 64;
  static constexpr int kHeight = 64;
  /// Half side length, in pixels, of a shape at scale 1.
  static constexpr double kMaxHalfExtent = 12.0;

  std::vector<std::uint8_t> pixels = std::vector<std::uint8_t>(kWidth * kHeight * 3, 0);

  const std::uint8_t* at(int x, int y) const { return &pixels[static_cast<std::size_t>((y * kWidth + x) * 3)]; }
  std::uint8_t* at(int x, int y) { return &pixels[static_cast<std::size_t>((y * kWidth + x) * 3)]; }
  bool foreground(int x, int y) const {
    const auto* p = at(x, y);
    return p[0] != 0 || p[1] != 0 || p[2] != 0;
  }
  friend bool operator==(const RenderedImage&, const RenderedImage&) = default;
};

struct UserProfile {
  int user_id = 0;
  Shape preferred_shape = Shape::Heart;
  Color preferred_color = Color::Red;
};

/// User u prefers shape u / 2 and color u % 2, covering all four pairs once.
std::array<UserProfile, kNumUsers> default_users();
const UserProfile& user_profile(int user_id);

struct Interaction {
  int user_id = 0;
  int rating = 0;
  ShapeLatent latent;
  Embedding embedding = Embedding::Zero();
};

struct DatasetSplit {
  std::vector<Interaction> train;
  std::vector<Interaction> test;
  std::uint64_t split_seed = 0;
};

/// Rasterizes the latent. Squares are axis-aligned filled squares. Hearts use a
/// fixed mask in shape-local coordinates (u, v) in [-1, 1]^2 with v pointing
/// down: two upper half-discs of radius 1/2 centred at (+-1/2, -1/2), over
/// the triangle (-1, -1/2), (1, -1/2), (0, 1). Pixel centres are tested.
RenderedImage render(const ShapeLatent& latent);

/// Like probability: 0.95 for the preferred pair, 0.10 when exactly one of
/// shape / color differs, 0.05 when both differ.
double preference_prob(const UserProfile& user, const ShapeLatent& latent);

ShapeLatent random_latent(RngStream& rng);

/// Draws n rated interactions (uniform user, uniform latent, Bernoulli
/// rating) and splits them train / test with a seeded shuffle.
DatasetSplit sample_dataset(std::size_t n, RngStream& rng, double train_fraction = 0.9);

std::size_t count_liked(std::span<const Interaction> items, int user_id);

}  // namespace prefdiff
