#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "prefdiff/commands.hpp"
#include "prefdiff/config.hpp"
#include "prefdiff/io/checkpoint.hpp"
#include "prefdiff/io/dataset_io.hpp"
#include "prefdiff/io/image_io.hpp"

using namespace prefdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("prefdiff_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PriorConfig tiny_prior() {
  PriorConfig c;
  c.layers = 1;
  c.heads = 2;
  c.hidden = 16;
  c.tokens = 4;
  return c;
}

}  // namespace

TEST_CASE("run configuration defaults carry the published hyperparameters") {
  const RunConfig c;
  struct Row {
    const char* field;
    double value;
    double expected;
  };
  const Row rows[] = {
      {"world.n_ratings", static_cast<double>(c.world.n_ratings), 40000},
      {"world.split", c.world.split, 0.9},
      {"prior.layers", static_cast<double>(c.prior.layers), 6},
      {"prior.heads", static_cast<double>(c.prior.heads), 8},
      {"prior.hidden", static_cast<double>(c.prior.hidden), 128},
      {"prior.tokens", static_cast<double>(c.prior.tokens), 32},
      {"prior.embedding_dim", static_cast<double>(c.prior.embedding_dim), 32},
      {"prior.num_users", static_cast<double>(c.prior.num_users), 4},
      {"prior.num_ratings", static_cast<double>(c.prior.num_ratings), 2},
      {"prior.steps_train", static_cast<double>(c.prior.steps_train), 1000},
      {"prior.lr", c.prior.lr, 1e-4},
      {"prior.batch", static_cast<double>(c.prior.batch), 64},
      {"prior.cond_dropout", c.prior.cond_dropout, 0.1},
      {"prior.sampling_steps", static_cast<double>(c.prior.sampling_steps), 64},
      {"verifier.lr", c.verifier.lr, 1e-3},
      {"verifier.batch", static_cast<double>(c.verifier.batch), 256},
      {"eval.permutations", static_cast<double>(c.eval.permutations), 1000},
      {"eval.alpha", c.eval.alpha, 0.05},
      {"eval.samples_per_user", static_cast<double>(c.eval.samples_per_user), 25},
      {"eval.perm_samples_per_user", static_cast<double>(c.eval.perm_samples_per_user), 30},
  };
  for (const auto& r : rows) {
    INFO(r.field);
    CHECK(r.value == r.expected);
  }
  CHECK(c.eval.k_list == std::vector<int>{1, 5, 10, 20});
  CHECK(c.eval.permutation_mode == "image");
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config JSON round trip, overrides and hashing") {
  const RunConfig defaults;
  const RunConfig back = config_from_json(to_json(defaults));
  CHECK(to_json(back) == to_json(defaults));
  CHECK(config_hash(back) == config_hash(defaults));
  CHECK(config_hash(defaults).size() == 16);

  RunConfig c;
  apply_override(c, "prior.omega=5");
  CHECK(c.prior.omega == 5.0);
  CHECK(config_hash(c) != config_hash(defaults));
  apply_override(c, "eval.k_list=[1,2]");
  CHECK(c.eval.k_list == std::vector<int>{1, 2});
  apply_override(c, "eval.permutation_mode=block");
  CHECK(c.eval.permutation_mode == "block");
  apply_override(c, "root_seed=99");
  CHECK(c.root_seed == 99);

  RunConfig moved = defaults;
  apply_override(moved, "output_dir=elsewhere");
  CHECK(config_hash(moved) == config_hash(defaults));

  auto message_of = [](auto&& fn) {
    try {
      fn();
    } catch (const ContractViolation& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  RunConfig d;
  CHECK(message_of([&] { apply_override(d, "prior.bogus=1"); }).find("prior.bogus") != std::string::npos);
  CHECK(message_of([&] { apply_override(d, "eval.alpha=1.5"); }).find("eval.alpha") != std::string::npos);
  CHECK(message_of([&] { apply_override(d, "prior.layers=two"); }).find("prior.layers") != std::string::npos);
  CHECK(message_of([&] { apply_override(d, "prior.heads=7"); }).find("prior.hidden") != std::string::npos);
  CHECK(message_of([&] { apply_override(d, "world.n_ratings=-5"); }).find("world.n_ratings") != std::string::npos);
  CHECK(message_of([&] { apply_override(d, "navigate.ts=[0.5,0.1]"); }).find("navigate.ts") != std::string::npos);
  CHECK(message_of([&] { config_from_json({{"eval", {{"k_list", {0}}}}}); }).find("eval.k_list") != std::string::npos);
  CHECK_THROWS_AS(apply_override(d, "noequals"), ContractViolation);
  CHECK(to_json(d) == to_json(defaults));  // failed overrides leave the config untouched
}

TEST_CASE("output root environment variable applies to relative directories only") {
  RunConfig c;
  c.output_dir = "runs/x";
  ::setenv("PREFDIFF_OUTPUT_ROOT", "/tmp/root", 1);
  CHECK(output_directory(c) == fs::path("/tmp/root/runs/x"));
  c.output_dir = "/abs/dir";
  CHECK(output_directory(c) == fs::path("/abs/dir"));
  ::unsetenv("PREFDIFF_OUTPUT_ROOT");
  c.output_dir = "runs/x";
  CHECK(output_directory(c) == fs::path("runs/x"));
}

TEST_CASE("checkpoint container round trip is bit-identical") {
  RngStream rng(61, "ckpt");
  PriorModel<float> prior(tiny_prior());
  prior.initialize(rng);
  for (auto* p : prior.parameters()) rng.fill_normal(p->value.data().data(), p->value.size());
  const NoiseSchedule schedule(1000);
  VerifierModel verifier;
  verifier.net.initialize(rng);
  rng.fill_normal(verifier.standardizer.mean.data(), kVerifierFeatureDim);
  const CodecSpec codec = CodecSpec::create(62);

  io::Checkpoint ck;
  ck.metadata["note"] = "x";
  io::store_prior(ck, prior, schedule);
  io::store_codec(ck, codec);
  io::store_verifier(ck, verifier);
  const std::string bytes = io::encode_checkpoint(ck);
  CHECK(bytes.substr(0, 4) == "RBCA");
  const io::Checkpoint back = io::decode_checkpoint(bytes);
  CHECK(io::encode_checkpoint(back) == bytes);

  PriorModel<float> p2 = io::restore_prior(back);
  auto a = prior.parameters();
  auto b = p2.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
  CHECK(io::restore_schedule(back).alpha_bar(500) == schedule.alpha_bar(500));
  const CodecSpec c2 = io::restore_codec(back);
  CHECK(c2.projection == codec.projection);
  CHECK(c2.seed == codec.seed);
  VerifierModel v2 = io::restore_verifier(back);
  CHECK(v2.standardizer.mean == verifier.standardizer.mean);
  CHECK(v2.standardizer.scale == verifier.standardizer.scale);
  auto va = verifier.net.parameters();
  auto vb = v2.net.parameters();
  for (std::size_t i = 0; i < va.size(); ++i) CHECK(va[i]->value == vb[i]->value);

  // Tensor names follow the module prefixes.
  CHECK(back.contains("codec/projection"));
  CHECK(back.contains("verifier/user_table"));
  CHECK(back.contains("prior/block0/modulation/weight"));
}

TEST_CASE("checkpoint decoding refuses unknown versions and damaged files") {
  io::Checkpoint ck;
  ck.add("t", Tensor({2, 3}));
  std::string bytes = io::encode_checkpoint(ck);
  std::string bumped = bytes;
  bumped[4] = 2;
  CHECK_THROWS_AS(io::decode_checkpoint(bumped), io::FormatError);
  CHECK_THROWS_AS(io::decode_checkpoint("RBDS" + bytes.substr(4)), io::FormatError);
  CHECK_THROWS_AS(io::decode_checkpoint(bytes.substr(0, bytes.size() - 1)), io::FormatError);
  CHECK_THROWS_AS(ck.tensor("missing"), io::FormatError);
  CHECK_THROWS_AS(ck.add("t", Tensor({1})), ContractViolation);
  io::Checkpoint empty;
  CHECK_THROWS_AS(io::restore_verifier(empty), io::FormatError);
}

TEST_CASE("dataset file round trip") {
  RngStream rng(63, "ds");
  DatasetSplit split = sample_dataset(500, rng);
  encode_all(split, CodecSpec::create(64));
  const std::string bytes = io::encode_dataset(split, {{"codec_seed", 64}});
  CHECK(bytes.substr(0, 4) == "RBDS");
  nlohmann::json meta;
  const DatasetSplit back = io::decode_dataset(bytes, &meta);
  CHECK(meta.at("codec_seed") == 64);
  REQUIRE(back.train.size() == split.train.size());
  REQUIRE(back.test.size() == split.test.size());
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(back.train[i].latent == split.train[i].latent);
    CHECK(back.train[i].embedding == split.train[i].embedding);
    CHECK(back.train[i].rating == split.train[i].rating);
    CHECK(back.train[i].user_id == split.train[i].user_id);
  }
  CHECK(io::encode_dataset(back, meta) == bytes);
  // Header, then 144 bytes per record.
  CHECK((bytes.size() - 12 - meta.dump().size()) == 500 * io::kDatasetRecordBytes);
  CHECK(io::kDatasetRecordBytes == 144);
  std::string broken = bytes;
  broken.pop_back();
  CHECK_THROWS_AS(io::decode_dataset(broken), io::FormatError);
}

TEST_CASE("PPM encoding and contact sheets") {
  const RenderedImage img = render({Shape::Heart, Color::Red, 0.5f, 0.5f, 0.8f});
  const io::RgbCanvas back = io::decode_ppm(io::encode_ppm(io::to_canvas(img), "line one\nline two"));
  CHECK(back.width == 64);
  CHECK(back.pixels == img.pixels);
  const io::RgbCanvas sheet = io::contact_sheet({img, img, img}, 2, 2);
  CHECK(sheet.width == 2 * 64 + 3 * 2);
  CHECK(sheet.height == 2 * 64 + 3 * 2);
  CHECK(sheet.pixels[0] == 128);
  CHECK_THROWS_AS(io::decode_ppm("P3\n1 1\n255\n"), io::FormatError);
}

TEST_CASE("commands: world is reproducible and missing inputs are usage errors") {
  const fs::path dir = scratch_dir("cmd");
  CommandContext ctx;
  ctx.config.world.n_ratings = 400;
  ctx.config.output_dir = (dir / "a").string();
  const CommandResult a = cmd_world(ctx);
  CHECK(a.ok);
  CommandContext ctx2 = ctx;
  ctx2.config.output_dir = (dir / "b").string();
  CHECK(cmd_world(ctx2).ok);
  CHECK(io::read_file(dir / "a" / files::kDataset) == io::read_file(dir / "b" / files::kDataset));
  CHECK(io::read_file(dir / "a" / files::kWorldSummary) == io::read_file(dir / "b" / files::kWorldSummary));

  CommandContext missing;
  missing.config.output_dir = (dir / "empty").string();
  CHECK_THROWS_AS(cmd_train_prior(missing), UsageError);
  CHECK_THROWS_AS(cmd_eval(missing), UsageError);
  fs::remove_all(dir);
}
