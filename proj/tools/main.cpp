#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "svsl/cli.hpp"
#include "svsl/version.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Feed-forward trainer with per-layer nearest-class-center probes"};
  app.set_version_flag("--version", std::string(svsl::kToolName) + " " + svsl::kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::string train_out_dir;
  std::uint64_t seed_override = 0;
  auto* train = app.add_subcommand(
      "train", "Run one training experiment and persist metrics, summary and snapshots");
  train->add_option("--config", config_path, "experiment config file")->required();
  auto* train_out =
      train->add_option("--out", train_out_dir, "output directory (overrides [output] dir)");
  auto* train_seed =
      train->add_option("--seed", seed_override, "training seed (overrides [train] seed)");

  std::string dir_a, dir_b, compare_out_dir;
  auto* compare =
      app.add_subcommand("compare", "Compare two completed runs (IT/EOT/best-test metrics)");
  compare->add_option("run_dir_a", dir_a, "first run directory")->required();
  compare->add_option("run_dir_b", dir_b, "second run directory")->required();
  auto* compare_out = compare->add_option(
      "--out", compare_out_dir, "also write compare.csv and compare.txt to this directory");

  std::string exit_dir;
  std::size_t exit_layer = 0;
  std::string exit_split = "test";
  auto* early_exit = app.add_subcommand(
      "early-exit", "Classify by nearest class center at an intermediate layer");
  early_exit->add_option("run_dir", exit_dir, "completed run directory")->required();
  early_exit->add_option("--layer", exit_layer, "exit layer (1-based)")->required();
  early_exit->add_option("--split", exit_split, "dataset split")
      ->check(CLI::IsMember({"train", "test"}));

  std::string report_dir;
  auto* report =
      app.add_subcommand("report", "Emit plot-ready per-layer mismatch tables for a run");
  report->add_option("run_dir", report_dir, "completed run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return svsl::kExitConfig;
  }

  if (*train) {
    svsl::TrainOptions options;
    options.config_path = config_path;
    if (*train_out) options.out_dir = train_out_dir;
    if (*train_seed) options.seed = seed_override;
    return svsl::cmd_train(options, std::cout, std::cerr);
  }
  if (*compare) {
    std::optional<std::string> out_dir;
    if (*compare_out) out_dir = compare_out_dir;
    return svsl::cmd_compare(dir_a, dir_b, out_dir, std::cout, std::cerr);
  }
  if (*early_exit) return svsl::cmd_early_exit(exit_dir, exit_layer, exit_split, std::cout, std::cerr);
  if (*report) return svsl::cmd_report(report_dir, std::cout, std::cerr);
  return svsl::kExitConfig;
}
