#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefdiff/prior.hpp"
#include "prefdiff/verifier.hpp"

namespace prefdiff {

struct WorldConfig {
  std::size_t n_ratings = 40000;
  double split = 0.9;
};

struct EvalConfig {
  std::vector<int> k_list{1, 5, 10, 20};
  std::vector<double> omegas{0.0, 1.0, 3.0, 5.0};
  int samples_per_user = 25;       // generated embeddings per user for precision / recall
  int ablation_samples_per_user = 100;  // verifier scores per user and omega; the metric pool is a prefix
  int random_pool_per_user = 1000;
  int permutations = 1000;
  double alpha = 0.05;
  int perm_samples_per_user = 30;
  std::string permutation_mode = "image";
};

struct NavigateConfig {
  std::vector<double> ts{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int best_of = 1;
  int user = 0;
};

struct RunConfig {
  std::uint64_t root_seed = 2024;
  WorldConfig world;
  PriorConfig prior;
  VerifierConfig verifier;
  EvalConfig eval;
  NavigateConfig navigate;
  std::string output_dir = "runs/default";

  /// Throws ContractViolation naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

/// Starts from the defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);

/// Applies one "a.b=value" override. The value is parsed as JSON when it can
/// be (numbers, booleans, arrays) and taken as a string otherwise.
void apply_override(RunConfig& config, const std::string& assignment);

/// FNV-1a 64 of the canonical JSON dump (output_dir excluded), as 16 hex digits.
std::string config_hash(const RunConfig& config);

/// output_dir, placed under $PREFDIFF_OUTPUT_ROOT when that is set and the
/// directory is relative.
std::filesystem::path output_directory(const RunConfig& config);

}  // namespace prefdiff
