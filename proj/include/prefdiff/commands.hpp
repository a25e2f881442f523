#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefdiff/codec.hpp"
#include "prefdiff/config.hpp"
#include "prefdiff/diffusion.hpp"
#include "prefdiff/eval.hpp"
#include "prefdiff/navigate.hpp"
#include "prefdiff/verifier.hpp"

namespace prefdiff {

/// Missing or unusable command inputs.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace files {
inline constexpr const char* kDataset = "dataset.rbds";
inline constexpr const char* kWorldSummary = "world_summary.json";
inline constexpr const char* kPrior = "prior.rbca";
inline constexpr const char* kPriorLoss = "prior_loss.csv";
inline constexpr const char* kVerifier = "verifier.rbca";
inline constexpr const char* kVerifierAuc = "verifier_auc.csv";
inline constexpr const char* kMetrics = "eval_metrics.csv";
inline constexpr const char* kGuidance = "guidance_scores.csv";
inline constexpr const char* kPermtest = "permtest.json";
inline constexpr const char* kTrajectory = "trajectory.json";
inline constexpr const char* kTrajectorySheet = "trajectory.ppm";
inline constexpr const char* kGradcheck = "gradcheck.csv";
inline constexpr const char* kRunConfig = "run_config.json";
}  // namespace files

struct CommandContext {
  RunConfig config;
  std::vector<std::string> overrides;  // as given on the command line, recorded in run_config.json
  // Inputs; empty means the default file in the output directory.
  std::filesystem::path dataset, prior, verifier;
  std::ostream* log = nullptr;

  std::filesystem::path output_dir() const { return output_directory(config); }
  std::filesystem::path dataset_path() const;
  std::filesystem::path prior_path() const;
  std::filesystem::path verifier_path() const;
};

struct CommandResult {
  std::vector<std::filesystem::path> outputs;
  bool ok = true;  // false when an output was written but its contents fail their check
};

/// Root of every random stream in a run.
RngStream root_stream(const RunConfig& config);
CodecSpec run_codec(const RunConfig& config);

struct GuidanceRow {
  double omega = 0.0;
  int user = 0;
  double mean_score = 0.0;
  double std_error = 0.0;
  int n = 0;
};

struct EvalResult {
  EvalReport report;
  std::vector<GuidanceRow> guidance;
};

std::string rebeca_method(double omega);

/// Precision / recall for the prior at every omega in the eval list (and the
/// default omega), the mean and random baselines, and per-user mean verifier
/// scores by omega.
EvalResult evaluate(const RunConfig& config, const PriorModel<float>& prior, const NoiseSchedule& schedule,
                    const VerifierModel& verifier, const CodecSpec& codec, const DatasetSplit& data);

/// scores[g][i][u] for per_user[g] = embeddings generated for user g.
CrossScores cross_scores(const std::vector<Matrix<float>>& per_user, const VerifierModel& verifier, const CodecSpec& codec);

/// Generates perm_samples_per_user images per user at `omega` and runs the
/// permutation test. Streams: rng.fork("samples").fork(user), rng.fork("null").
PermutationReport personalization_test(const RunConfig& config, const PriorModel<float>& prior,
                                       const NoiseSchedule& schedule, const VerifierModel& verifier,
                                       const CodecSpec& codec, double omega, const RngStream& rng);

nlohmann::json to_json(const PermutationReport& report);
nlohmann::json to_json(const Trajectory& trajectory);

CommandResult cmd_world(const CommandContext& ctx);
CommandResult cmd_train_prior(const CommandContext& ctx);
CommandResult cmd_train_verifier(const CommandContext& ctx);

struct SampleRequest {
  int user = 0;
  int rating = 1;
  std::optional<double> omega;  // default: prior.omega
  int n = 16;
};
CommandResult cmd_sample(const CommandContext& ctx, const SampleRequest& request);

CommandResult cmd_eval(const CommandContext& ctx);
CommandResult cmd_permtest(const CommandContext& ctx);

struct InterpRequest {
  ShapeLatent source;
  std::optional<int> user;  // default: navigate.user
};
CommandResult cmd_interp(const CommandContext& ctx, const InterpRequest& request);

CommandResult cmd_gradcheck(const CommandContext& ctx);

/// world, train-prior, train-verifier, eval, permtest.
CommandResult cmd_all(const CommandContext& ctx);

}  // namespace prefdiff
