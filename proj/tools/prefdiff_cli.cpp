#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prefdiff/commands.hpp"
#include "prefdiff/io/checkpoint.hpp"

using namespace prefdiff;

namespace {

constexpr int kExitOutputInvalid = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFailure = 3;

Shape parse_shape(const std::string& s) {
  if (s == "heart") return Shape::Heart;
  if (s == "square") return Shape::Square;
  throw UsageError("--shape must be heart or square");
}

Color parse_color(const std::string& s) {
  if (s == "red") return Color::Red;
  if (s == "blue") return Color::Blue;
  throw UsageError("--color must be red or blue");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized diffusion prior over a controlled shape/color world"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, output, dataset, prior, verifier;
  std::vector<std::string> overrides;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration (defaults apply to absent fields)")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a config field, e.g. --set prior.omega=5")->allow_extra_args(false);
  app.add_option("--output", output, "Output directory (same as --set output_dir=...)");
  app.add_option("--dataset", dataset, "Dataset file (default: <output>/dataset.rbds)");
  app.add_option("--prior", prior, "Prior checkpoint (default: <output>/prior.rbca)");
  app.add_option("--verifier", verifier, "Verifier checkpoint (default: <output>/verifier.rbca)");
  app.add_flag("-q,--quiet", quiet, "No progress output");

  auto* world = app.add_subcommand("world", "Generate the rated dataset");
  auto* train_prior_cmd = app.add_subcommand("train-prior", "Train the diffusion prior");
  auto* train_verifier_cmd = app.add_subcommand("train-verifier", "Train the verifier and report ROC-AUC");
  auto* eval = app.add_subcommand("eval", "Precision/recall at k and the guidance ablation");
  auto* permtest = app.add_subcommand("permtest", "Personalization permutation test");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient table");
  auto* all = app.add_subcommand("all", "world, train-prior, train-verifier, eval, permtest");
  auto* print_config = app.add_subcommand("config", "Print the effective configuration as JSON");

  SampleRequest sreq;
  double omega = -1;
  auto* sample_cmd = app.add_subcommand("sample", "Draw embeddings from the prior and decode them");
  sample_cmd->add_option("--user", sreq.user, "User id")->required();
  sample_cmd->add_option("--rating", sreq.rating, "Rating to condition on (0 or 1)");
  sample_cmd->add_option("--omega", omega, "Guidance strength (default: prior.omega)");
  sample_cmd->add_option("--n", sreq.n, "Number of samples");

  InterpRequest ireq;
  int iuser = -1, best_of = 0;
  std::string shape = "square", color = "blue";
  std::vector<double> ts;
  auto* interp = app.add_subcommand("interp", "Slerp from a source latent toward a prior sample");
  interp->add_option("--user", iuser, "User id (default: navigate.user)");
  interp->add_option("--shape", shape, "Source shape: heart or square");
  interp->add_option("--color", color, "Source color: red or blue");
  interp->add_option("--x", ireq.source.pos_x, "Source x position in [0.2, 0.8]");
  interp->add_option("--y", ireq.source.pos_y, "Source y position in [0.2, 0.8]");
  interp->add_option("--scale", ireq.source.scale, "Source scale in [0.5, 1]");
  interp->add_option("--ts", ts, "Interpolation times (default: navigate.ts)")->delimiter(',');
  interp->add_option("--best-of", best_of, "Target = best-scoring of n prior samples (default: navigate.best_of)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    CommandContext ctx;
    if (!config_path.empty()) ctx.config = load_config(config_path);
    if (!output.empty()) overrides.push_back("output_dir=" + output);
    if (*interp) {
      if (!ts.empty()) overrides.push_back("navigate.ts=" + nlohmann::json(ts).dump());
      if (best_of > 0) overrides.push_back("navigate.best_of=" + std::to_string(best_of));
    }
    for (const auto& o : overrides) apply_override(ctx.config, o);
    ctx.overrides = overrides;
    ctx.dataset = dataset;
    ctx.prior = prior;
    ctx.verifier = verifier;
    if (!quiet) ctx.log = &std::cerr;

    if (*print_config) {
      std::cout << to_json(ctx.config).dump(2) << "\n";
      return 0;
    }

    CommandResult result;
    if (*world) result = cmd_world(ctx);
    else if (*train_prior_cmd) result = cmd_train_prior(ctx);
    else if (*train_verifier_cmd) result = cmd_train_verifier(ctx);
    else if (*eval) result = cmd_eval(ctx);
    else if (*permtest) result = cmd_permtest(ctx);
    else if (*gradcheck) result = cmd_gradcheck(ctx);
    else if (*all) result = cmd_all(ctx);
    else if (*sample_cmd) {
      if (omega >= 0) sreq.omega = omega;
      result = cmd_sample(ctx, sreq);
    } else if (*interp) {
      ireq.source.shape = parse_shape(shape);
      ireq.source.color = parse_color(color);
      if (iuser >= 0) ireq.user = iuser;
      result = cmd_interp(ctx, ireq);
    }
    for (const auto& p : result.outputs) std::cout << p.string() << "\n";
    if (!result.ok) {
      std::cerr << "error: an output failed its post-write check\n";
      return kExitOutputInvalid;
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ContractViolation& e) {
    std::cerr << "invalid configuration or input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
