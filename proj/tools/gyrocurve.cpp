#include "gyrocurve/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

#ifndef GYRO_SCENARIO_DIR
#define GYRO_SCENARIO_DIR "scenarios"
#endif

int main(int argc, char** argv) {
  using namespace gyro::cli;
  CLI::App app{"Affine bodies on curved manifolds: simulation, action variables and invariant checks"};
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::string out_dir = ".";
  bool dry_run = false;
  std::uint64_t seed = 1;
  int threads = 1;
  int samples = 0;
  bool flip = false;
  std::string dir = GYRO_SCENARIO_DIR;

  auto* sim = app.add_subcommand("simulate", "integrate scenarios and write CSV trajectories plus JSON summaries");
  sim->add_option("--config,-c", configs, "scenario file (repeatable)")->required()->check(CLI::ExistingFile);
  sim->add_option("--out,-o", out_dir, "output directory");
  sim->add_flag("--dry-run", dry_run, "validate and print the normalized config without integrating");
  sim->add_option("--seed", seed, "accepted for uniformity; simulations are deterministic");
  sim->add_option("--threads,-j", threads, "scenarios run concurrently")->check(CLI::PositiveNumber);

  auto* act = app.add_subcommand("actions", "action variables by closed form and quadrature");
  act->add_option("--config,-c", configs, "scenario file (repeatable)")->required()->check(CLI::ExistingFile);
  act->add_option("--threads,-j", threads, "scenarios run concurrently")->check(CLI::PositiveNumber);

  auto* ver = app.add_subcommand("verify", "randomized identity checks on the configured space");
  ver->add_option("--config,-c", configs, "scenario file (repeatable)")->required()->check(CLI::ExistingFile);
  ver->add_option("--seed", seed, "random seed");
  ver->add_option("--samples", samples, "random states per check (default from config)");
  ver->add_flag("--flip-curvature", flip, "debug: negate the curvature term in the closed-form brackets");
  ver->add_option("--threads,-j", threads, "scenarios run concurrently")->check(CLI::PositiveNumber);

  auto* lst = app.add_subcommand("list-scenarios", "list scenario files in a directory");
  lst->add_option("--dir,-d", dir, "scenario directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  if (*sim) return cmd_simulate({configs, out_dir, dry_run, threads}, std::cout, std::cerr);
  if (*act) return cmd_actions(configs, threads, std::cout, std::cerr);
  if (*ver) return cmd_verify({configs, seed, samples, flip, threads}, std::cout, std::cerr);
  if (*lst) return cmd_list(dir, std::cout, std::cerr);
  return kValidation;
}
