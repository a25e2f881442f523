#include "prefdiff/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstdio>

#include "prefdiff/io/checkpoint.hpp"

namespace prefdiff {

namespace {

using nlohmann::json;

// Rejects keys that the defaults do not have, recursing into objects.
void check_keys(const json& given, const json& known, const std::string& prefix) {
  require(given.is_object(), "config field '" + prefix + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    require(known.contains(key), "unknown config field '" + path + "'");
    if (known.at(key).is_object()) check_keys(value, known.at(key), path);
  }
}

template <typename T>
T field(const json& j, const std::string& dotted) {
  const json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    node = &node->at(dotted.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      require(node->is_number_integer() || node->is_number_unsigned(), "config field '" + dotted + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) require(!(node->is_number_integer() && node->get<std::int64_t>() < 0), "config field '" + dotted + "' must be non-negative");
    }
    return node->get<T>();
  } catch (const json::exception&) {
    throw ContractViolation("config field '" + dotted + "' has the wrong type");
  }
}

void require_field(bool ok, const std::string& name, const std::string& what) {
  require(ok, "config field '" + name + "' " + what);
}

}  // namespace

void RunConfig::validate() const {
  prior.validate();
  require_field(prior.num_users == kNumUsers, "prior.num_users", "must equal the number of users in the world (4)");
  require_field(prior.num_ratings == 2, "prior.num_ratings", "must be 2 (binary ratings)");
  require_field(prior.embedding_dim == kEmbeddingDim, "prior.embedding_dim", "must equal the codec width (32)");
  require_field(world.n_ratings >= 10, "world.n_ratings", "must be at least 10");
  require_field(world.split > 0.0 && world.split < 1.0, "world.split", "must lie in (0, 1)");
  require_field(verifier.epochs >= 1, "verifier.epochs", "must be >= 1");
  require_field(verifier.batch >= 1, "verifier.batch", "must be >= 1");
  require_field(verifier.lr > 0.0, "verifier.lr", "must be positive");
  require_field(verifier.calibration_images >= 2, "verifier.calibration_images", "must be >= 2");
  require_field(verifier.bootstrap >= 2, "verifier.bootstrap", "must be >= 2");
  require_field(!eval.k_list.empty(), "eval.k_list", "must not be empty");
  for (int k : eval.k_list) require_field(k >= 1, "eval.k_list", "entries must be positive");
  require_field(!eval.omegas.empty(), "eval.omegas", "must not be empty");
  for (double w : eval.omegas) require_field(w >= 0.0, "eval.omegas", "entries must be >= 0");
  require_field(eval.samples_per_user >= 1, "eval.samples_per_user", "must be >= 1");
  require_field(eval.ablation_samples_per_user >= eval.samples_per_user, "eval.ablation_samples_per_user",
                "must be >= eval.samples_per_user");
  require_field(eval.random_pool_per_user >= 1, "eval.random_pool_per_user", "must be >= 1");
  require_field(eval.permutations >= 1, "eval.permutations", "must be >= 1");
  require_field(eval.alpha > 0.0 && eval.alpha < 1.0, "eval.alpha", "must lie in (0, 1)");
  require_field(eval.perm_samples_per_user >= 1, "eval.perm_samples_per_user", "must be >= 1");
  require_field(eval.permutation_mode == "image" || eval.permutation_mode == "block", "eval.permutation_mode",
                "must be 'image' or 'block'");
  require_field(!navigate.ts.empty(), "navigate.ts", "must not be empty");
  for (std::size_t i = 0; i < navigate.ts.size(); ++i) {
    require_field(navigate.ts[i] >= 0.0 && navigate.ts[i] <= 1.0, "navigate.ts", "entries must lie in [0, 1]");
    require_field(i == 0 || navigate.ts[i] > navigate.ts[i - 1], "navigate.ts", "must be strictly increasing");
  }
  require_field(navigate.best_of >= 1, "navigate.best_of", "must be >= 1");
  require_field(navigate.user >= 0 && navigate.user < kNumUsers, "navigate.user", "must be a user id in [0, 4)");
  require_field(!output_dir.empty(), "output_dir", "must not be empty");
}

nlohmann::json to_json(const RunConfig& c) {
  json j;
  j["root_seed"] = c.root_seed;
  j["world"] = {{"n_ratings", c.world.n_ratings}, {"split", c.world.split}};
  j["prior"] = io::to_json(c.prior);
  j["verifier"] = {{"epochs", c.verifier.epochs},
                   {"batch", c.verifier.batch},
                   {"lr", c.verifier.lr},
                   {"calibration_images", c.verifier.calibration_images},
                   {"bootstrap", c.verifier.bootstrap}};
  j["eval"] = {{"k_list", c.eval.k_list},
               {"omegas", c.eval.omegas},
               {"samples_per_user", c.eval.samples_per_user},
               {"ablation_samples_per_user", c.eval.ablation_samples_per_user},
               {"random_pool_per_user", c.eval.random_pool_per_user},
               {"permutations", c.eval.permutations},
               {"alpha", c.eval.alpha},
               {"perm_samples_per_user", c.eval.perm_samples_per_user},
               {"permutation_mode", c.eval.permutation_mode}};
  j["navigate"] = {{"ts", c.navigate.ts}, {"best_of", c.navigate.best_of}, {"user", c.navigate.user}};
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig config_from_json(const nlohmann::json& given) {
  json j = to_json(RunConfig{});
  check_keys(given, j, "");
  j.merge_patch(given);

  RunConfig c;
  c.root_seed = field<std::uint64_t>(j, "root_seed");
  c.world.n_ratings = field<std::size_t>(j, "world.n_ratings");
  c.world.split = field<double>(j, "world.split");
  auto& p = c.prior;
  p.layers = field<int>(j, "prior.layers");
  p.heads = field<int>(j, "prior.heads");
  p.hidden = field<int>(j, "prior.hidden");
  p.tokens = field<int>(j, "prior.tokens");
  p.token_dim = field<int>(j, "prior.token_dim");
  p.embedding_dim = field<int>(j, "prior.embedding_dim");
  p.num_users = field<int>(j, "prior.num_users");
  p.num_ratings = field<int>(j, "prior.num_ratings");
  p.mlp_ratio = field<int>(j, "prior.mlp_ratio");
  p.cond_dropout = field<double>(j, "prior.cond_dropout");
  p.steps_train = field<int>(j, "prior.steps_train");
  p.lr = field<double>(j, "prior.lr");
  p.batch = field<int>(j, "prior.batch");
  p.epochs = field<int>(j, "prior.epochs");
  p.sampling_steps = field<int>(j, "prior.sampling_steps");
  p.omega = field<double>(j, "prior.omega");
  c.verifier.epochs = field<int>(j, "verifier.epochs");
  c.verifier.batch = field<int>(j, "verifier.batch");
  c.verifier.lr = field<double>(j, "verifier.lr");
  c.verifier.calibration_images = field<int>(j, "verifier.calibration_images");
  c.verifier.bootstrap = field<int>(j, "verifier.bootstrap");
  c.eval.k_list = field<std::vector<int>>(j, "eval.k_list");
  c.eval.omegas = field<std::vector<double>>(j, "eval.omegas");
  c.eval.samples_per_user = field<int>(j, "eval.samples_per_user");
  c.eval.ablation_samples_per_user = field<int>(j, "eval.ablation_samples_per_user");
  c.eval.random_pool_per_user = field<int>(j, "eval.random_pool_per_user");
  c.eval.permutations = field<int>(j, "eval.permutations");
  c.eval.alpha = field<double>(j, "eval.alpha");
  c.eval.perm_samples_per_user = field<int>(j, "eval.perm_samples_per_user");
  c.eval.permutation_mode = field<std::string>(j, "eval.permutation_mode");
  c.navigate.ts = field<std::vector<double>>(j, "navigate.ts");
  c.navigate.best_of = field<int>(j, "navigate.best_of");
  c.navigate.user = field<int>(j, "navigate.user");
  c.output_dir = field<std::string>(j, "output_dir");
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ContractViolation("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "override '" + assignment + "' must have the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  std::string pointer = "/" + key;
  std::replace(pointer.begin(), pointer.end(), '.', '/');
  json merged = to_json(config);
  const json::json_pointer ptr(pointer);
  require(merged.contains(ptr) && !merged.at(ptr).is_object(), "unknown config field '" + key + "'");

  json value = text;
  if (!merged.at(ptr).is_string()) {
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      throw ContractViolation("config field '" + key + "' has the wrong type");
    }
  }
  merged[ptr] = value;
  config = config_from_json(merged);
}

std::string config_hash(const RunConfig& config) {
  json j = to_json(config);
  j.erase("output_dir");  // where results go does not change what they are
  const std::string canonical = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::filesystem::path output_directory(const RunConfig& config) {
  std::filesystem::path dir(config.output_dir);
  if (dir.is_relative())
    if (const char* root = std::getenv("PREFDIFF_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / dir;
  return dir;
}

}  // namespace prefdiff
