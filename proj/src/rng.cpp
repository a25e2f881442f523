#include "prefdiff/core/rng.hpp"

#include <cmath>
#include <numbers>

namespace prefdiff {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::string label)
    : seed_(seed), label_(std::move(label)), key_(mix64(seed ^ mix64(fnv1a64(label_)))) {}

RngStream::RngStream(std::uint64_t seed, std::string label, std::uint64_t key)
    : seed_(seed), label_(std::move(label)), key_(key) {}

RngStream RngStream::fork(std::string_view label) const {
  std::string child = label_;
  child += '/';
  child += label;
  return RngStream(seed_, std::move(child), mix64(key_ ^ mix64(fnv1a64(label) + 0x632be59bd9b4e019ULL)));
}

RngStream RngStream::fork(std::uint64_t index) const { return fork(std::to_string(index)); }

std::uint64_t RngStream::below(std::uint64_t n) {
  require(n > 0, "below(n) requires n > 0");
  // Lemire's multiply-shift with rejection of the biased low range.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

double RngStream::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace prefdiff
