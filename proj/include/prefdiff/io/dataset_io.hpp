#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "prefdiff/world.hpp"

namespace prefdiff::io {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetRecordBytes = 4 + 3 * 4 + kEmbeddingDim * 4;

/// "RBDS" file: magic, u32 version, u32-length JSON header (counts, split seed
/// plus any caller metadata), then fixed-width records, train before test:
/// user u8, rating u8, shape u8, color u8, pos_x / pos_y / scale f32, 32 x f32 embedding.
std::string encode_dataset(const DatasetSplit& split, const nlohmann::json& metadata = nlohmann::json::object());
DatasetSplit decode_dataset(std::string_view bytes, nlohmann::json* metadata = nullptr);

void save_dataset(const std::filesystem::path& path, const DatasetSplit& split,
                  const nlohmann::json& metadata = nlohmann::json::object());
DatasetSplit load_dataset(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace prefdiff::io
