// seqord: fit, predict, simulate and compare sequential ordinal space-time models.
#include <iostream>

#include "CLI11.hpp"
#include "seqord/commands.hpp"

namespace {

constexpr int kExitData = 2;
constexpr int kExitConvergence = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential ordinal spatio-temporal models with Laplace-approximate inference"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master random seed (overrides config)");
    sub->add_option("--out", out_dir, "output directory (overrides config)");
    sub->add_option("--threads", threads, "worker threads (overrides config)")->check(CLI::PositiveNumber);
  };
  auto* fit = app.add_subcommand("fit", "fit one model; writes summary.csv, dic.csv and the fit archive");
  auto* predict = app.add_subcommand("predict", "category probability quantiles over a prediction grid");
  auto* simulate = app.add_subcommand("simulate", "synthetic observations.csv, controls.csv and truth.json");
  auto* compare = app.add_subcommand("compare", "fit several variants and rank them by DIC");
  for (auto* sub : {fit, predict, simulate, compare}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitData;
  }

  try {
    seqord::RunConfig config = seqord::RunConfig::load(config_path);
    if (seed != 0) {
      config.inference.seed = seed;
      if (config.truth) config.truth->seed = seed;
    }
    if (!out_dir.empty()) config.out = out_dir;
    if (threads > 0) config.inference.threads = threads;

    if (fit->parsed()) seqord::run_fit(config, std::cerr);
    if (predict->parsed()) seqord::run_predict(config, std::cerr);
    if (simulate->parsed()) seqord::run_simulate(config, std::cerr);
    if (compare->parsed()) {
      for (const auto& [name, dic] : seqord::run_compare(config, std::cerr))
        std::cout << name << "," << seqord::format_number(dic) << "\n";
    }
  } catch (const seqord::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const seqord::ConvergenceError& e) {
    std::cerr << "convergence failure: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
