#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prefdiff {

struct GradCheckRow {
  std::string layer;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

/// Central-difference checks, in double precision, of every trainable layer
/// (parameters and inputs) plus the verifier network and the full denoiser
/// loss on a 4-token configuration.
std::vector<GradCheckRow> run_gradcheck_suite(std::uint64_t seed);

}  // namespace prefdiff
