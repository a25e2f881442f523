#include "prefdiff/io/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "byte_stream.hpp"

namespace prefdiff::io {

namespace {

constexpr std::string_view kMagic = "RBCA";

template <typename Scalar>
void store_parameters(Checkpoint& ck, ParameterList<Scalar> params) {
  for (const auto* p : params) ck.add(p->name, p->value);
}

template <typename Scalar>
void load_parameters(const Checkpoint& ck, ParameterList<Scalar> params) {
  for (auto* p : params) {
    const Tensor& t = ck.tensor(p->name);
    if (t.shape() != p->value.shape()) throw FormatError("checkpoint tensor '" + p->name + "' has the wrong shape");
    p->value = t;
  }
}

const nlohmann::json& section(const Checkpoint& ck, const char* key) {
  if (!ck.metadata.contains(key)) throw FormatError(std::string("checkpoint has no '") + key + "' metadata");
  return ck.metadata.at(key);
}

}  // namespace

void Checkpoint::add(std::string name, Tensor tensor) {
  require(!contains(name), "duplicate checkpoint tensor '" + name + "'");
  require(name.size() <= std::numeric_limits<std::uint16_t>::max(), "tensor name too long");
  tensors.emplace_back(std::move(name), std::move(tensor));
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw FormatError("checkpoint has no tensor '" + name + "'");
}

std::string encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string meta = ck.metadata.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.put_bytes(meta);
  for (const auto& [name, t] : ck.tensors) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (Index d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    w.put_floats(t.data().data(), static_cast<std::size_t>(t.size()));
  }
  return std::move(w.str());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.take(4) != kMagic) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  const auto meta_len = r.get<std::uint32_t>();
  try {
    ck.metadata = nlohmann::json::parse(r.take(meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  while (!r.done()) {
    const auto name_len = r.get<std::uint16_t>();
    std::string name(r.take(name_len));
    const auto rank = r.get<std::uint8_t>();
    std::vector<Index> shape;
    std::size_t count = 1;
    for (int i = 0; i < rank; ++i) {
      const auto d = r.get<std::uint32_t>();
      if (d == 0) throw FormatError("checkpoint tensor '" + name + "' has a zero dimension");
      shape.push_back(d);
      count *= d;
    }
    if (count > r.remaining() / sizeof(float)) throw FormatError("checkpoint: truncated file");
    Tensor t(shape);
    r.get_floats(t.data().data(), count);
    if (ck.contains(name)) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

nlohmann::json to_json(const PriorConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"hidden", c.hidden},
          {"tokens", c.tokens},
          {"token_dim", c.token_dim},
          {"embedding_dim", c.embedding_dim},
          {"num_users", c.num_users},
          {"num_ratings", c.num_ratings},
          {"mlp_ratio", c.mlp_ratio},
          {"cond_dropout", c.cond_dropout},
          {"steps_train", c.steps_train},
          {"lr", c.lr},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"sampling_steps", c.sampling_steps},
          {"omega", c.omega}};
}

PriorConfig prior_config_from_json(const nlohmann::json& j) {
  PriorConfig c;
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.hidden = j.at("hidden");
  c.tokens = j.at("tokens");
  c.token_dim = j.at("token_dim");
  c.embedding_dim = j.at("embedding_dim");
  c.num_users = j.at("num_users");
  c.num_ratings = j.at("num_ratings");
  c.mlp_ratio = j.at("mlp_ratio");
  c.cond_dropout = j.at("cond_dropout");
  c.steps_train = j.at("steps_train");
  c.lr = j.at("lr");
  c.batch = j.at("batch");
  c.epochs = j.at("epochs");
  c.sampling_steps = j.at("sampling_steps");
  c.omega = j.at("omega");
  c.validate();
  return c;
}

void store_prior(Checkpoint& ck, const PriorModel<float>& model, const NoiseSchedule& schedule) {
  ck.metadata["prior"] = to_json(model.config());
  ck.metadata["prior"]["parameter_count"] = parameter_count(const_cast<PriorModel<float>&>(model).parameters());
  ck.metadata["schedule"] = {{"kind", "squaredcos_cap_v2"},
                             {"steps", schedule.steps()},
                             {"offset", schedule.offset()},
                             {"max_beta", schedule.max_beta()},
                             {"prediction", "sample"}};
  store_parameters(ck, const_cast<PriorModel<float>&>(model).parameters());
}

PriorModel<float> restore_prior(const Checkpoint& ck) {
  PriorModel<float> model(prior_config_from_json(section(ck, "prior")));
  load_parameters(ck, model.parameters());
  return model;
}

NoiseSchedule restore_schedule(const Checkpoint& ck) {
  const auto& s = section(ck, "schedule");
  return NoiseSchedule(s.at("steps"), s.at("offset"), s.at("max_beta"));
}

void store_codec(Checkpoint& ck, const CodecSpec& codec) {
  ck.metadata["codec"] = {{"seed", codec.seed}, {"layout_version", CodecSpec::kLayoutVersion}, {"norm_bound", codec.norm_bound}};
  Tensor t({kEmbeddingDim, kFeatureDim});
  t.matrix() = codec.projection;
  ck.add("codec/projection", std::move(t));
}

CodecSpec restore_codec(const Checkpoint& ck) {
  const auto& m = section(ck, "codec");
  if (m.at("layout_version").get<int>() != CodecSpec::kLayoutVersion) throw FormatError("unsupported codec layout version");
  CodecSpec codec;
  codec.seed = m.at("seed");
  codec.norm_bound = m.at("norm_bound");
  const Tensor& t = ck.tensor("codec/projection");
  if (t.shape() != std::vector<Index>{kEmbeddingDim, kFeatureDim}) throw FormatError("codec projection has the wrong shape");
  codec.projection = t.matrix();
  return codec;
}

void store_verifier(Checkpoint& ck, const VerifierModel& model) {
  const auto& s = model.standardizer;
  ck.metadata["verifier"] = {{"feature_mean", std::vector<float>(s.mean.data(), s.mean.data() + s.mean.size())},
                             {"feature_scale", std::vector<float>(s.scale.data(), s.scale.data() + s.scale.size())},
                             {"user_dim", kVerifierUserDim},
                             {"hidden", kVerifierHidden}};
  store_parameters(ck, const_cast<VerifierModel&>(model).net.parameters());
}

VerifierModel restore_verifier(const Checkpoint& ck) {
  const auto& m = section(ck, "verifier");
  const auto mean = m.at("feature_mean").get<std::vector<float>>();
  const auto scale = m.at("feature_scale").get<std::vector<float>>();
  if (mean.size() != kVerifierFeatureDim || scale.size() != kVerifierFeatureDim)
    throw FormatError("verifier standardizer has the wrong width");
  VerifierModel model;
  for (int i = 0; i < kVerifierFeatureDim; ++i) {
    model.standardizer.mean[i] = mean[static_cast<std::size_t>(i)];
    model.standardizer.scale[i] = scale[static_cast<std::size_t>(i)];
  }
  load_parameters(ck, model.net.parameters());
  return model;
}

}  // namespace prefdiff::io
