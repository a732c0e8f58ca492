#include "mvcov/cli.hpp"

#include <CLI11.hpp>

#include <string>

int main(int argc, char **argv) {
  CLI::App app{"Bayesian multivariate spatial covariance models with a separability test"};
  app.require_subcommand(1);

  std::string config;
  mvcov::cli::Overrides ov;
  std::uint64_t seed = 0;
  std::string out;

  for (const auto &[name, fn] : mvcov::cli::commands()) {
    auto *sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", ov.threads, "concurrent model fits (compare)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("--verbose", ov.verbose, "progress messages on stderr");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(mvcov::ExitCode::config_error);
  }
  auto *chosen = app.get_subcommands().front();
  if (chosen->count("--seed") > 0) {
    ov.seed = seed;
  }
  if (chosen->count("--out") > 0) {
    ov.out_dir = out;
  }
  return mvcov::cli::run(chosen->get_name(), config, ov);
}
