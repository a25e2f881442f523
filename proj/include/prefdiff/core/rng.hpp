#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "prefdiff/core/types.hpp"

namespace prefdiff {

/// 64-bit FNV-1a; used for stream labels and config hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream. Draw i is a pure function of (key, i), so
/// forking never depends on how many values the parent has already produced.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }
  std::uint64_t counter() const { return counter_; }
  std::uint64_t key() const { return key_; }

  /// Child stream keyed by the parent's key and `label` only.
  RngStream fork(std::string_view label) const;
  RngStream fork(std::uint64_t index) const;

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  /// Uniform in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (cosine branch; one value per two draws).
  double normal();

  template <typename Scalar>
  void fill_normal(Scalar* out, Index n) {
    for (Index i = 0; i < n; ++i) out[i] = static_cast<Scalar>(normal());
  }

  template <typename Scalar>
  Vector<Scalar> normal_vector(Index n) {
    Vector<Scalar> v(n);
    fill_normal(v.data(), n);
    return v;
  }

  /// Fisher-Yates with this stream.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  RngStream(std::uint64_t seed, std::string label, std::uint64_t key);

  std::uint64_t seed_;
  std::string label_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline RngStream rng_fork(const RngStream& parent, std::string_view label) { return parent.fork(label); }

}  // namespace prefdiff
