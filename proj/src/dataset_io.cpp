#include "prefdiff/io/dataset_io.hpp"

#include "byte_stream.hpp"

namespace prefdiff::io {

namespace {

constexpr std::string_view kMagic = "RBDS";

void put_record(ByteWriter& w, const Interaction& it) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(it.user_id));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(it.rating));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(it.latent.shape));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(it.latent.color));
  w.put<float>(it.latent.pos_x);
  w.put<float>(it.latent.pos_y);
  w.put<float>(it.latent.scale);
  w.put_floats(it.embedding.data(), kEmbeddingDim);
}

Interaction get_record(ByteReader& r) {
  Interaction it;
  it.user_id = r.get<std::uint8_t>();
  it.rating = r.get<std::uint8_t>();
  const auto shape = r.get<std::uint8_t>();
  const auto color = r.get<std::uint8_t>();
  if (it.user_id >= kNumUsers || it.rating > 1 || shape > 1 || color > 1) throw FormatError("dataset: corrupt record");
  it.latent.shape = static_cast<Shape>(shape);
  it.latent.color = static_cast<Color>(color);
  it.latent.pos_x = r.get<float>();
  it.latent.pos_y = r.get<float>();
  it.latent.scale = r.get<float>();
  r.get_floats(it.embedding.data(), kEmbeddingDim);
  if (!it.latent.valid()) throw FormatError("dataset: record latent out of range");
  return it;
}

}  // namespace

std::string encode_dataset(const DatasetSplit& split, const nlohmann::json& metadata) {
  nlohmann::json header = metadata;
  header["n_train"] = split.train.size();
  header["n_test"] = split.test.size();
  header["split_seed"] = split.split_seed;
  header["record_bytes"] = kDatasetRecordBytes;
  const std::string h = header.dump();

  ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(h.size()));
  w.put_bytes(h);
  for (const auto& it : split.train) put_record(w, it);
  for (const auto& it : split.test) put_record(w, it);
  return std::move(w.str());
}

DatasetSplit decode_dataset(std::string_view bytes, nlohmann::json* metadata) {
  ByteReader r(bytes, "dataset");
  if (r.take(4) != kMagic) throw FormatError("not a dataset file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.take(r.get<std::uint32_t>()));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("dataset header is not valid JSON: ") + e.what());
  }
  const std::size_t n_train = header.at("n_train");
  const std::size_t n_test = header.at("n_test");
  if (header.at("record_bytes").get<std::size_t>() != kDatasetRecordBytes || r.remaining() != (n_train + n_test) * kDatasetRecordBytes)
    throw FormatError("dataset: record count does not match the file size");
  DatasetSplit split;
  split.split_seed = header.at("split_seed");
  split.train.reserve(n_train);
  split.test.reserve(n_test);
  for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(get_record(r));
  for (std::size_t i = 0; i < n_test; ++i) split.test.push_back(get_record(r));
  if (metadata) *metadata = std::move(header);
  return split;
}

void save_dataset(const std::filesystem::path& path, const DatasetSplit& split, const nlohmann::json& metadata) {
  write_file(path, encode_dataset(split, metadata));
}

DatasetSplit load_dataset(const std::filesystem::path& path, nlohmann::json* metadata) {
  return decode_dataset(read_file(path), metadata);
}

}  // namespace prefdiff::io
