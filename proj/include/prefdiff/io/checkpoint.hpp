#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "prefdiff/codec.hpp"
#include "prefdiff/prior.hpp"
#include "prefdiff/schedule.hpp"
#include "prefdiff/verifier.hpp"

namespace prefdiff::io {

/// Malformed, truncated or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "RBCA" container: magic, u32 version, u32-length JSON metadata, then named
/// tensors (u16 name length, name, u8 rank, u32 dims, f32 payload), all little-endian.
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const PriorConfig& config);
PriorConfig prior_config_from_json(const nlohmann::json& j);

/// Tensors under prior/..., metadata keys "prior" (config) and "schedule".
void store_prior(Checkpoint& checkpoint, const PriorModel<float>& model, const NoiseSchedule& schedule);
PriorModel<float> restore_prior(const Checkpoint& checkpoint);
NoiseSchedule restore_schedule(const Checkpoint& checkpoint);

/// codec/projection plus metadata key "codec" (seed, layout version, norm bound).
void store_codec(Checkpoint& checkpoint, const CodecSpec& codec);
CodecSpec restore_codec(const Checkpoint& checkpoint);

/// Tensors under verifier/..., standardization constants in metadata key "verifier".
void store_verifier(Checkpoint& checkpoint, const VerifierModel& model);
VerifierModel restore_verifier(const Checkpoint& checkpoint);

/// Whole-file helpers shared by the IO modules.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace prefdiff::io
