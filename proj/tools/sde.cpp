// sde: simulate, compare, check and convergence runs for intrinsic SDEs.

#include <cstdint>
#include <iostream>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "isde/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Intrinsic SDEs on charted manifolds"};
  app.require_subcommand(1, 1);

  std::string config;
  isde::cli::Overrides overrides;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t threads = 1;

  const std::pair<const char*, const char*> commands[] = {
      {"simulate", "Simulate paths; writes paths.csv and summary.txt"},
      {"compare", "Simulate two representations with shared noise and report the deviation"},
      {"check", "Coordinate-invariance and defining-property checks at random points"},
      {"convergence", "Strong and weak errors against a fine reference grid; writes convergence.csv"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", config, "Run configuration file")->required();
    sub->add_option("--seed", seed, "Override [run] seed");
    sub->add_option("--out", out_dir, "Override [run] out directory");
    sub->add_option("--threads", threads, "Worker threads for path simulation")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : isde::cli::kConfig;
  }

  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed") > 0) overrides.seed = seed;
  if (sub->count("--out") > 0) overrides.out_dir = out_dir;
  if (sub->count("--threads") > 0) overrides.threads = threads;
  return isde::cli::run(sub->get_name(), config, overrides, std::cout, std::cerr);
}
