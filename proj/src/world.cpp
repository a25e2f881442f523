#include "prefdiff/world.hpp"

#include <cmath>
#include <numeric>

namespace prefdiff {

const char* to_string(Shape s) { return s == Shape::Heart ? "heart" : "square"; }
const char* to_string(Color c) { return c == Color::Red ? "red" : "blue"; }

bool ShapeLatent::valid() const {
  auto in = [](float v, float lo, float hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  return (shape == Shape::Heart || shape == Shape::Square) && (color == Color::Red || color == Color::Blue) &&
         in(pos_x, kPosMin, kPosMax) && in(pos_y, kPosMin, kPosMax) && in(scale, kScaleMin, kScaleMax);
}

std::array<UserProfile, kNumUsers> default_users() {
  std::array<UserProfile, kNumUsers> users;
  for (int u = 0; u < kNumUsers; ++u)
    users[static_cast<std::size_t>(u)] = {u, static_cast<Shape>(u / 2), static_cast<Color>(u % 2)};
  return users;
}

const UserProfile& user_profile(int user_id) {
  static const auto users = default_users();
  require(user_id >= 0 && user_id < kNumUsers, "unknown user id");
  return users[static_cast<std::size_t>(user_id)];
}

namespace {

bool inside_heart(double u, double v) {
  if (v <= -0.5) {
    const double dl = (u + 0.5) * (u + 0.5) + (v + 0.5) * (v + 0.5);
    const double dr = (u - 0.5) * (u - 0.5) + (v + 0.5) * (v + 0.5);
    return dl <= 0.25 || dr <= 0.25;
  }
  return v <= 1.0 && std::abs(u) <= (1.0 - v) / 1.5;
}

bool inside_square(double u, double v) { return std::abs(u) <= 1.0 && std::abs(v) <= 1.0; }

}  // namespace

RenderedImage render(const ShapeLatent& latent) {
  require(latent.valid(), "render: latent outside its valid ranges");
  RenderedImage img;
  const double cx = latent.pos_x * RenderedImage::kWidth;
  const double cy = latent.pos_y * RenderedImage::kHeight;
  const double half = latent.scale * RenderedImage::kMaxHalfExtent;
  const std::uint8_t r = latent.color == Color::Red ? 255 : 0;
  const std::uint8_t b = latent.color == Color::Blue ? 255 : 0;
  for (int y = 0; y < RenderedImage::kHeight; ++y) {
    for (int x = 0; x < RenderedImage::kWidth; ++x) {
      const double u = (x + 0.5 - cx) / half;
      const double v = (y + 0.5 - cy) / half;
      const bool hit = latent.shape == Shape::Heart ? inside_heart(u, v) : inside_square(u, v);
      if (hit) {
        auto* p = img.at(x, y);
        p[0] = r;
        p[2] = b;
      }
    }
  }
  return img;
}

double preference_prob(const UserProfile& user, const ShapeLatent& latent) {
  const int mismatches = (latent.shape != user.preferred_shape) + (latent.color != user.preferred_color);
  switch (mismatches) {
    case 0: return 0.95;
    case 1: return 0.10;
    default: return 0.05;
  }
}

ShapeLatent random_latent(RngStream& rng) {
  ShapeLatent l;
  l.shape = static_cast<Shape>(rng.below(2));
  l.color = static_cast<Color>(rng.below(2));
  l.pos_x = static_cast<float>(rng.uniform(ShapeLatent::kPosMin, ShapeLatent::kPosMax));
  l.pos_y = static_cast<float>(rng.uniform(ShapeLatent::kPosMin, ShapeLatent::kPosMax));
  l.scale = static_cast<float>(rng.uniform(ShapeLatent::kScaleMin, ShapeLatent::kScaleMax));
  return l;
}

DatasetSplit sample_dataset(std::size_t n, RngStream& rng, double train_fraction) {
  require(n >= 1, "sample_dataset: need at least one draw");
  require(train_fraction > 0.0 && train_fraction < 1.0, "sample_dataset: train fraction must lie in (0, 1)");
  RngStream draws = rng.fork("draws");
  std::vector<Interaction> all(n);
  for (auto& item : all) {
    item.user_id = static_cast<int>(draws.below(kNumUsers));
    item.latent = random_latent(draws);
    item.rating = draws.bernoulli(preference_prob(user_profile(item.user_id), item.latent)) ? 1 : 0;
  }

  RngStream split = rng.fork("split");
  DatasetSplit out;
  out.split_seed = split.key();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  split.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  out.train.reserve(n_train);
  out.test.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) (i < n_train ? out.train : out.test).push_back(all[order[i]]);
  return out;
}

std::size_t count_liked(std::span<const Interaction> items, int user_id) {
  std::size_t n = 0;
  for (const auto& it : items) n += (it.user_id == user_id && it.rating == 1);
  return n;
}

}  // namespace prefdiff
