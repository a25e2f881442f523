#include "prefdiff/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "prefdiff/gradcheck_suite.hpp"
#include "prefdiff/io/checkpoint.hpp"
#include "prefdiff/io/dataset_io.hpp"
#include "prefdiff/io/image_io.hpp"

namespace prefdiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void note(const CommandContext& ctx, const std::string& message) {
  if (ctx.log) *ctx.log << message << std::endl;
}

json provenance(const RunConfig& c) { return {{"config_hash", config_hash(c)}, {"root_seed", c.root_seed}}; }

std::string csv_preamble(const RunConfig& c) {
  return "# config_hash=" + config_hash(c) + " root_seed=" + std::to_string(c.root_seed) + "\n";
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string exact(float v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

void write_json(const fs::path& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

// Every text output must parse back: JSON as JSON, CSV as a preamble plus a header row.
bool text_output_ok(const fs::path& path) {
  const std::string text = io::read_file(path);
  if (path.extension() == ".json") return json::accept(text);
  return text.rfind("# config_hash=", 0) == 0 && std::count(text.begin(), text.end(), '\n') >= 2;
}

void write_run_config(const CommandContext& ctx, CommandResult& result) {
  json j = provenance(ctx.config);
  j["config"] = to_json(ctx.config);
  j["overrides"] = ctx.overrides;
  const fs::path p = ctx.output_dir() / files::kRunConfig;
  write_json(p, j);
  result.outputs.push_back(p);
}

void require_input(const fs::path& path, const std::string& what, const std::string& producer, const std::string& flag) {
  if (!fs::exists(path))
    throw UsageError("missing " + what + " '" + path.string() + "': run `prefdiff " + producer + "` first or pass " + flag);
}

DatasetSplit load_data(const CommandContext& ctx, json* header = nullptr) {
  require_input(ctx.dataset_path(), "dataset", "world", "--dataset");
  return io::load_dataset(ctx.dataset_path(), header);
}

struct LoadedPrior {
  PriorModel<float> model;
  NoiseSchedule schedule;
  CodecSpec codec;
};

LoadedPrior load_prior(const CommandContext& ctx) {
  require_input(ctx.prior_path(), "prior checkpoint", "train-prior", "--prior");
  const io::Checkpoint ck = io::load_checkpoint(ctx.prior_path());
  return {io::restore_prior(ck), io::restore_schedule(ck), io::restore_codec(ck)};
}

VerifierModel load_verifier(const CommandContext& ctx) {
  require_input(ctx.verifier_path(), "verifier checkpoint", "train-verifier", "--verifier");
  return io::restore_verifier(io::load_checkpoint(ctx.verifier_path()));
}

// Writes the checkpoint and confirms it decodes back to the same bytes.
bool save_checked(const fs::path& path, const io::Checkpoint& ck) {
  io::save_checkpoint(path, ck);
  const std::string bytes = io::read_file(path);
  return io::encode_checkpoint(io::decode_checkpoint(bytes)) == bytes;
}

SampleOptions sample_options(const RunConfig& c, int user, double omega) {
  SampleOptions o;
  o.user = user;
  o.rating = 1;
  o.omega = omega;
  o.steps = c.prior.sampling_steps;
  return o;
}

std::vector<RenderedImage> decode_rows(const Matrix<float>& rows, const CodecSpec& codec) {
  std::vector<RenderedImage> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Index i = 0; i < rows.rows(); ++i) out.push_back(decode_to_image(rows.row(i).transpose(), codec));
  return out;
}

json cell_rates(std::span<const Interaction> items, int user) {
  std::array<int, 3> liked{}, total{};
  for (const auto& it : items) {
    if (it.user_id != user) continue;
    const auto& p = user_profile(user);
    const int diff = (it.latent.shape != p.preferred_shape) + (it.latent.color != p.preferred_color);
    ++total[static_cast<std::size_t>(diff)];
    liked[static_cast<std::size_t>(diff)] += it.rating;
  }
  json j = json::array();
  for (std::size_t d = 0; d < 3; ++d)
    j.push_back({{"mismatched_factors", d}, {"count", total[d]}, {"like_rate", total[d] ? double(liked[d]) / total[d] : 0.0}});
  return j;
}

}  // namespace

fs::path CommandContext::dataset_path() const { return dataset.empty() ? output_dir() / files::kDataset : dataset; }
fs::path CommandContext::prior_path() const { return prior.empty() ? output_dir() / files::kPrior : prior; }
fs::path CommandContext::verifier_path() const { return verifier.empty() ? output_dir() / files::kVerifier : verifier; }

RngStream root_stream(const RunConfig& config) { return RngStream(config.root_seed, "prefdiff"); }

CodecSpec run_codec(const RunConfig& config) { return CodecSpec::create(config.root_seed); }

std::string rebeca_method(double omega) { return "rebeca_w" + num(omega); }

EvalResult evaluate(const RunConfig& c, const PriorModel<float>& prior, const NoiseSchedule& schedule,
                    const VerifierModel& verifier, const CodecSpec& codec, const DatasetSplit& data) {
  std::vector<double> omegas = c.eval.omegas;
  if (std::find(omegas.begin(), omegas.end(), c.prior.omega) == omegas.end()) omegas.push_back(c.prior.omega);
  const RngStream rng = root_stream(c).fork("eval");

  std::vector<UserPool> pools;
  for (int u = 0; u < kNumUsers; ++u) pools.push_back(user_pool(data.test, u));

  EvalResult out;
  for (double omega : omegas) {
    for (int u = 0; u < kNumUsers; ++u) {
      // Same stream for every omega, so the ablation compares like with like.
      const Matrix<float> s = sample_many(prior, schedule, sample_options(c, u, omega), c.eval.ablation_samples_per_user,
                                          rng.fork("samples").fork(static_cast<std::uint64_t>(u)));
      append_metrics(out.report, rebeca_method(omega), u, s.topRows(c.eval.samples_per_user), pools[static_cast<std::size_t>(u)],
                     c.eval.k_list);
      const std::vector<RenderedImage> images = decode_rows(s, codec);
      const std::vector<int> users(images.size(), u);
      const std::vector<double> scores = predict_batch(verifier, users, images);
      double mean = 0, ss = 0;
      for (double v : scores) mean += v / static_cast<double>(scores.size());
      for (double v : scores) ss += (v - mean) * (v - mean);
      const double n = static_cast<double>(scores.size());
      out.guidance.push_back({omega, u, mean, n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0, static_cast<int>(n)});
    }
  }
  for (int u = 0; u < kNumUsers; ++u) {
    const Matrix<float> m = baseline_mean(u, data.train).transpose();
    append_metrics(out.report, "mean", u, m, pools[static_cast<std::size_t>(u)], c.eval.k_list);
  }
  for (int u = 0; u < kNumUsers; ++u) {
    RngStream r = rng.fork("random").fork(static_cast<std::uint64_t>(u));
    append_metrics(out.report, "random", u, baseline_random(data.train, c.eval.random_pool_per_user, r),
                   pools[static_cast<std::size_t>(u)], c.eval.k_list);
  }
  return out;
}

CrossScores cross_scores(const std::vector<Matrix<float>>& per_user, const VerifierModel& verifier, const CodecSpec& codec) {
  const std::size_t users = per_user.size();
  CrossScores scores(users);
  for (std::size_t g = 0; g < users; ++g) {
    const std::vector<RenderedImage> images = decode_rows(per_user[g], codec);
    std::vector<int> who;
    std::vector<RenderedImage> batch;
    for (const auto& img : images)
      for (std::size_t u = 0; u < users; ++u) {
        who.push_back(static_cast<int>(u));
        batch.push_back(img);
      }
    const std::vector<double> s = predict_batch(verifier, who, batch);
    for (std::size_t i = 0; i < images.size(); ++i)
      scores[g].emplace_back(s.begin() + static_cast<std::ptrdiff_t>(i * users), s.begin() + static_cast<std::ptrdiff_t>((i + 1) * users));
  }
  return scores;
}

PermutationReport personalization_test(const RunConfig& c, const PriorModel<float>& prior, const NoiseSchedule& schedule,
                                       const VerifierModel& verifier, const CodecSpec& codec, double omega,
                                       const RngStream& rng) {
  std::vector<Matrix<float>> per_user;
  for (int g = 0; g < kNumUsers; ++g)
    per_user.push_back(sample_many(prior, schedule, sample_options(c, g, omega), c.eval.perm_samples_per_user,
                                   rng.fork("samples").fork(static_cast<std::uint64_t>(g))));
  return permutation_test(cross_scores(per_user, verifier, codec), c.eval.permutations, c.eval.alpha,
                          permutation_mode_from_string(c.eval.permutation_mode), rng.fork("null"));
}

json to_json(const PermutationReport& r) {
  json z;
  if (std::isfinite(r.z_gap))
    z = r.z_gap;
  else
    z = r.z_gap > 0 ? "inf" : "-inf";
  return {{"mode", to_string(r.mode)},   {"observed_score", r.observed_score}, {"p_value", r.p_value},
          {"z_gap", z},                   {"alpha", r.alpha},                   {"rejected", r.rejected},
          {"permutations", r.null_scores.size()}, {"null_scores", r.null_scores}};
}

json to_json(const Trajectory& t) {
  json points = json::array();
  for (std::size_t i = 0; i < t.ts.size(); ++i) {
    const ShapeLatent& l = t.latents[i];
    points.push_back({{"t", t.ts[i]},
                      {"score", t.scores[i]},
                      {"shape", to_string(l.shape)},
                      {"color", to_string(l.color)},
                      {"pos_x", l.pos_x},
                      {"pos_y", l.pos_y},
                      {"scale", l.scale},
                      {"embedding", std::vector<float>(t.points[i].data(), t.points[i].data() + kEmbeddingDim)}});
  }
  return {{"best_of", t.best_of},
          {"target_choice", t.best_of > 1 ? "best_of_n" : "first_draw"},
          {"target", std::vector<float>(t.target.data(), t.target.data() + kEmbeddingDim)},
          {"points", points}};
}

CommandResult cmd_world(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  CommandResult result;
  write_run_config(ctx, result);
  RngStream rng = root_stream(c).fork("world");
  DatasetSplit data = sample_dataset(c.world.n_ratings, rng, c.world.split);
  const CodecSpec codec = run_codec(c);
  encode_all(data, codec);

  json meta = provenance(c);
  meta["codec_seed"] = codec.seed;
  const fs::path path = ctx.dataset_path();
  io::save_dataset(path, data, meta);
  const std::string bytes = io::read_file(path);
  json back_meta;
  result.ok &= io::encode_dataset(io::decode_dataset(bytes, &back_meta), meta) == bytes;
  result.outputs.push_back(path);

  json summary = provenance(c);
  summary["n_train"] = data.train.size();
  summary["n_test"] = data.test.size();
  summary["users"] = json::array();
  for (int u = 0; u < kNumUsers; ++u) {
    const auto& p = user_profile(u);
    summary["users"].push_back({{"user", u},
                                {"preferred_shape", to_string(p.preferred_shape)},
                                {"preferred_color", to_string(p.preferred_color)},
                                {"liked_train", count_liked(data.train, u)},
                                {"liked_test", count_liked(data.test, u)},
                                {"train_cells", cell_rates(data.train, u)}});
  }
  const fs::path sp = ctx.output_dir() / files::kWorldSummary;
  write_json(sp, summary);
  result.outputs.push_back(sp);
  note(ctx, "world: " + std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) + " test ratings -> " +
                path.string());
  return result;
}

CommandResult cmd_train_prior(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  json header;
  const DatasetSplit data = load_data(ctx, &header);
  const CodecSpec codec = CodecSpec::create(header.at("codec_seed").get<std::uint64_t>());
  CommandResult result;
  write_run_config(ctx, result);

  PriorModel<float> probe(c.prior);
  note(ctx, "train-prior: " + std::to_string(probe.parameter_count()) + " parameters, " + std::to_string(c.prior.epochs) +
                " epochs over " + std::to_string(data.train.size()) + " examples");
  const TrainedPrior trained = train_prior(data.train, c.prior, root_stream(c).fork("prior"), [&](int epoch, double loss, const PriorModel<float>&) {
    note(ctx, "  epoch " + std::to_string(epoch) + " loss " + num(loss));
  });

  io::Checkpoint ck;
  ck.metadata = provenance(c);
  io::store_prior(ck, trained.model, trained.schedule);
  io::store_codec(ck, codec);
  ck.metadata["trace"] = {{"epoch_loss", trained.trace.epoch_loss},
                          {"initial_eval_loss", trained.trace.initial_eval_loss},
                          {"final_eval_loss", trained.trace.final_eval_loss}};
  const fs::path path = ctx.prior_path();
  result.ok &= save_checked(path, ck);
  result.outputs.push_back(path);

  std::string csv = csv_preamble(c) + "epoch,loss\n";
  for (std::size_t e = 0; e < trained.trace.epoch_loss.size(); ++e) csv += std::to_string(e) + "," + num(trained.trace.epoch_loss[e]) + "\n";
  const fs::path lp = ctx.output_dir() / files::kPriorLoss;
  io::write_file(lp, csv);
  result.ok &= text_output_ok(lp);
  result.outputs.push_back(lp);
  note(ctx, "train-prior: eval loss " + num(trained.trace.initial_eval_loss) + " -> " + num(trained.trace.final_eval_loss));
  return result;
}

CommandResult cmd_train_verifier(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const DatasetSplit data = load_data(ctx);
  CommandResult result;
  write_run_config(ctx, result);
  const TrainedVerifier tv = train_verifier(data.train, data.test, c.verifier, root_stream(c).fork("verifier"));

  io::Checkpoint ck;
  ck.metadata = provenance(c);
  io::store_verifier(ck, tv.model);
  ck.metadata["training"] = {{"epochs", c.verifier.epochs},
                             {"batch", c.verifier.batch},
                             {"lr", c.verifier.lr},
                             {"epoch_loss", tv.report.epoch_loss}};
  const fs::path path = ctx.verifier_path();
  result.ok &= save_checked(path, ck);
  result.outputs.push_back(path);

  std::string csv = csv_preamble(c) + "split,auc,boot_se\n";
  csv += "train," + num(tv.report.train.auc) + "," + num(tv.report.train.boot_se) + "\n";
  csv += "test," + num(tv.report.test.auc) + "," + num(tv.report.test.boot_se) + "\n";
  csv += "bayes," + num(tv.report.bayes_auc) + ",0\n";
  const fs::path ap = ctx.output_dir() / files::kVerifierAuc;
  io::write_file(ap, csv);
  result.ok &= text_output_ok(ap);
  result.outputs.push_back(ap);
  note(ctx, "train-verifier: AUC train " + num(tv.report.train.auc) + " test " + num(tv.report.test.auc) + " (Bayes " +
                num(tv.report.bayes_auc) + ")");
  return result;
}

CommandResult cmd_sample(const CommandContext& ctx, const SampleRequest& req) {
  const RunConfig& c = ctx.config;
  if (req.user < 0 || req.user >= kNumUsers) throw UsageError("--user must lie in [0, " + std::to_string(kNumUsers) + ")");
  if (req.rating < 0 || req.rating > 1) throw UsageError("--rating must be 0 or 1");
  if (req.n < 1) throw UsageError("--n must be positive");
  const double omega = req.omega.value_or(c.prior.omega);
  if (omega < 0) throw UsageError("--omega must be >= 0");
  const LoadedPrior lp = load_prior(ctx);
  CommandResult result;
  write_run_config(ctx, result);

  SampleOptions o = sample_options(c, req.user, omega);
  o.rating = req.rating;
  const Matrix<float> s = sample_many(lp.model, lp.schedule, o, req.n,
                                      root_stream(c).fork("sample").fork(static_cast<std::uint64_t>(req.user)).fork(
                                          static_cast<std::uint64_t>(req.rating)));
  const std::string stem = "samples_u" + std::to_string(req.user) + "_r" + std::to_string(req.rating) + "_w" + num(omega);

  std::string csv = csv_preamble(c);
  for (int d = 0; d < kEmbeddingDim; ++d) csv += (d ? ",e" : "e") + std::to_string(d);
  csv += ",shape,color,pos_x,pos_y,scale\n";
  for (Index i = 0; i < s.rows(); ++i) {
    for (int d = 0; d < kEmbeddingDim; ++d) csv += (d ? "," : "") + exact(s(i, d));
    const ShapeLatent l = decode(s.row(i).transpose(), lp.codec);
    csv += std::string(",") + to_string(l.shape) + "," + to_string(l.color) + "," + exact(l.pos_x) + "," + exact(l.pos_y) + "," +
           exact(l.scale) + "\n";
  }
  const fs::path cp = ctx.output_dir() / (stem + ".csv");
  io::write_file(cp, csv);
  result.ok &= text_output_ok(cp);
  result.outputs.push_back(cp);

  const fs::path ip = ctx.output_dir() / (stem + ".ppm");
  io::write_ppm(ip, io::contact_sheet(decode_rows(s, lp.codec), 8), csv_preamble(c).substr(2));
  result.outputs.push_back(ip);
  note(ctx, "sample: " + std::to_string(req.n) + " embeddings -> " + cp.string());
  return result;
}

CommandResult cmd_eval(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const DatasetSplit data = load_data(ctx);
  const LoadedPrior lp = load_prior(ctx);
  const VerifierModel verifier = load_verifier(ctx);
  CommandResult result;
  write_run_config(ctx, result);
  const EvalResult ev = evaluate(c, lp.model, lp.schedule, verifier, lp.codec, data);

  std::string csv = csv_preamble(c) + "method,user,k,precision,recall\n";
  for (const auto& r : ev.report.rows)
    csv += r.method + "," + std::to_string(r.user) + "," + std::to_string(r.k) + "," + num(r.precision) + "," + num(r.recall) + "\n";
  for (const auto& m : ev.report.methods())
    for (int k : c.eval.k_list)
      csv += m + ",macro," + std::to_string(k) + "," + num(ev.report.macro_precision(m, k)) + "," +
             num(ev.report.macro_recall(m, k)) + "\n";
  const fs::path mp = ctx.output_dir() / files::kMetrics;
  io::write_file(mp, csv);
  result.ok &= text_output_ok(mp);
  result.outputs.push_back(mp);

  std::string g = csv_preamble(c) + "omega,user,mean_score,std_error,n\n";
  for (const auto& r : ev.guidance)
    g += num(r.omega) + "," + std::to_string(r.user) + "," + num(r.mean_score) + "," + num(r.std_error) + "," + std::to_string(r.n) + "\n";
  const fs::path gp = ctx.output_dir() / files::kGuidance;
  io::write_file(gp, g);
  result.ok &= text_output_ok(gp);
  result.outputs.push_back(gp);

  for (const auto& m : ev.report.methods())
    note(ctx, "eval: " + m + " macro P@1 " + num(ev.report.macro_precision(m, c.eval.k_list.front())));
  return result;
}

CommandResult cmd_permtest(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  const LoadedPrior lp = load_prior(ctx);
  const VerifierModel verifier = load_verifier(ctx);
  CommandResult result;
  write_run_config(ctx, result);
  const PermutationReport rep =
      personalization_test(c, lp.model, lp.schedule, verifier, lp.codec, c.prior.omega, root_stream(c).fork("permtest"));
  json j = provenance(c);
  j.update(to_json(rep));
  j["omega"] = c.prior.omega;
  j["images_per_user"] = c.eval.perm_samples_per_user;
  const fs::path p = ctx.output_dir() / files::kPermtest;
  write_json(p, j);
  result.ok &= text_output_ok(p);
  result.outputs.push_back(p);
  note(ctx, "permtest: observed " + num(rep.observed_score) + " p " + num(rep.p_value) + " z_gap " + num(rep.z_gap));
  return result;
}

CommandResult cmd_interp(const CommandContext& ctx, const InterpRequest& req) {
  const RunConfig& c = ctx.config;
  const int user = req.user.value_or(c.navigate.user);
  if (user < 0 || user >= kNumUsers) throw UsageError("--user must lie in [0, " + std::to_string(kNumUsers) + ")");
  if (!req.source.valid()) throw UsageError("source latent outside its valid ranges");
  const LoadedPrior lp = load_prior(ctx);
  const VerifierModel verifier = load_verifier(ctx);
  CommandResult result;
  write_run_config(ctx, result);

  TrajectoryOptions opt;
  opt.user = user;
  opt.omega = c.prior.omega;
  opt.steps = c.prior.sampling_steps;
  opt.best_of = c.navigate.best_of;
  const Trajectory t = trajectory(encode(req.source, lp.codec), opt, lp.model, lp.schedule, verifier, lp.codec,
                                  std::vector<float>(c.navigate.ts.begin(), c.navigate.ts.end()), root_stream(c).fork("interp"));
  json j = provenance(c);
  j.update(to_json(t));
  j["user"] = user;
  j["omega"] = opt.omega;
  j["source"] = {{"shape", to_string(req.source.shape)}, {"color", to_string(req.source.color)}, {"pos_x", req.source.pos_x},
                 {"pos_y", req.source.pos_y},             {"scale", req.source.scale}};
  const fs::path p = ctx.output_dir() / files::kTrajectory;
  write_json(p, j);
  result.ok &= text_output_ok(p);
  result.outputs.push_back(p);

  std::vector<RenderedImage> frames;
  for (const auto& l : t.latents) frames.push_back(render(l));
  const fs::path sp = ctx.output_dir() / files::kTrajectorySheet;
  io::write_ppm(sp, io::contact_sheet(frames, static_cast<int>(frames.size())), csv_preamble(c).substr(2));
  result.outputs.push_back(sp);
  note(ctx, "interp: score " + num(t.scores.front()) + " -> " + num(t.scores.back()));
  return result;
}

CommandResult cmd_gradcheck(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  CommandResult result;
  write_run_config(ctx, result);
  std::string csv = csv_preamble(c) + "layer,max_rel_error,tolerance,passed\n";
  for (const auto& row : run_gradcheck_suite(c.root_seed)) {
    csv += row.layer + "," + num(row.max_rel_error) + "," + num(row.tolerance) + "," + (row.passed() ? "1" : "0") + "\n";
    result.ok &= row.passed();
    note(ctx, "gradcheck: " + row.layer + " " + num(row.max_rel_error) + (row.passed() ? "" : "  FAILED"));
  }
  const fs::path p = ctx.output_dir() / files::kGradcheck;
  io::write_file(p, csv);
  result.ok &= text_output_ok(p);
  result.outputs.push_back(p);
  return result;
}

CommandResult cmd_all(const CommandContext& ctx) {
  CommandResult all;
  for (auto step : {cmd_world, cmd_train_prior, cmd_train_verifier, cmd_eval, cmd_permtest}) {
    CommandResult r = step(ctx);
    all.ok &= r.ok;
    for (auto& p : r.outputs)
      if (std::find(all.outputs.begin(), all.outputs.end(), p) == all.outputs.end()) all.outputs.push_back(p);
  }
  return all;
}

}  // namespace prefdiff
