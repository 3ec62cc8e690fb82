#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "svsl/config.hpp"
#include "svsl/error.hpp"
#include "svsl/metrics.hpp"
#include "svsl/run_io.hpp"
#include "svsl/train.hpp"
#include "svsl/version.hpp"

namespace svsl {

// Process exit codes; stable across releases.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTraining = 3;
inline constexpr int kExitAnalysis = 4;

struct TrainOptions {
  std::string config_path;
  std::optional<std::string> out_dir;   // overrides [output] dir
  std::optional<std::uint64_t> seed;    // overrides [train] seed
};

namespace detail {

// Pixel and raw-CSV features get the standard train-fit mean-std transform;
// synthetic mixtures are consumed as sampled.
inline void maybe_normalize(const DatasetConfig& cfg, Dataset& train, Dataset& test) {
  if (cfg.kind != DatasetConfig::Kind::gaussian) normalize_mean_std(train, {&test});
}

inline std::string describe_it(const std::optional<std::size_t>& it_epoch) {
  return it_epoch ? std::to_string(*it_epoch) : "never";
}

}  // namespace detail

inline int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  std::string config_text;
  try {
    cfg = parse_config_file(options.config_path);
    config_text = detail::read_text_file(options.config_path);
    if (options.seed) cfg.train.seed = *options.seed;
    if (options.out_dir) cfg.output_dir = *options.out_dir;
    if (cfg.output_dir.empty())
      throw ParseError(options.config_path +
                       ": no output directory: set [output] dir or pass --out");
  } catch (const ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  Dataset train, test;
  std::vector<LayerSpec> specs;
  try {
    std::tie(train, test) = load_datasets(cfg.dataset);
    detail::maybe_normalize(cfg.dataset, train, test);
    specs = build_layer_specs(cfg.model, train.num_classes);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  RunResult result;
  try {
    result = run_experiment(cfg.train, train.dim(), specs, train, test);
  } catch (const TrainingAbort& e) {
    err << "training aborted: " << e.what() << "\n";
    return kExitTraining;
  } catch (const ContractViolation& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    const RunPaths paths{cfg.output_dir};
    persist_run(paths, config_text, cfg.train, result);
    const EpochRecord& eot = result.records.back();
    out << "run dir: " << cfg.output_dir << "\n";
    out << "epochs: " << cfg.train.epochs << ", it_epoch: "
        << detail::describe_it(result.it_epoch) << "\n";
    out << "eot train_accuracy: " << format_double(eot.train_accuracy)
        << ", test_accuracy: " << format_double(eot.test_accuracy) << "\n";
    const BestTestEpoch best = best_test_epoch(to_view(result));
    out << "best test_accuracy: " << format_double(best.accuracy) << " at epoch "
        << best.epoch << (best.in_tpt ? " (in TPT)" : "") << "\n";
  } catch (const std::exception& e) {
    err << "error writing run outputs: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}

namespace detail {

inline std::string tpt_flag(bool in_tpt) { return in_tpt ? "yes" : "no"; }

// Comparison table rows; kept in one place so the CSV and the text render
// from identical values.
struct CompareTable {
  RunComparison cmp;
  const EpochRecord* eot_a;
  const EpochRecord* eot_b;
};

inline CompareTable build_compare_table(const RunView& a, const RunView& b) {
  CompareTable t{compare_views(a, b), &record_at_epoch(a, a.eot_epoch, "EOT"),
                 &record_at_epoch(b, b.eot_epoch, "EOT")};
  return t;
}

inline std::string compare_csv_text(const CompareTable& t) {
  const RunComparison& c = t.cmp;
  std::string out = "metric,layer,run_a,run_b,delta_a_minus_b\n";
  auto opt_epoch = [](const std::optional<std::size_t>& e) {
    return e ? std::to_string(*e) : "";
  };
  out += "it_epoch,," + opt_epoch(c.it_epoch_a) + "," + opt_epoch(c.it_epoch_b) + ",\n";
  out += "eot_test_accuracy,," + format_double(c.eot_test_accuracy_a) + "," +
         format_double(c.eot_test_accuracy_b) + "," +
         format_double(c.eot_test_accuracy_a - c.eot_test_accuracy_b) + "\n";
  out += "best_test_accuracy,," + format_double(c.best_a.accuracy) + "," +
         format_double(c.best_b.accuracy) + "," +
         format_double(c.best_a.accuracy - c.best_b.accuracy) + "\n";
  out += "best_test_epoch,," + std::to_string(c.best_a.epoch) + "," +
         std::to_string(c.best_b.epoch) + ",\n";
  out += "best_test_in_tpt,," + std::to_string(c.best_a.in_tpt ? 1 : 0) + "," +
         std::to_string(c.best_b.in_tpt ? 1 : 0) + ",\n";
  out += "mean_intermediate_lambda_test_delta,,,," +
         format_double(c.mean_intermediate_test_delta) + "\n";
  for (std::size_t j = 0; j < c.lambda_train_eot_delta.size(); ++j) {
    out += "lambda_train_eot," + std::to_string(j + 1) + "," +
           format_double(t.eot_a->lambda_train[j]) + "," +
           format_double(t.eot_b->lambda_train[j]) + "," +
           format_double(c.lambda_train_eot_delta[j]) + "\n";
    out += "lambda_test_eot," + std::to_string(j + 1) + "," +
           format_double(t.eot_a->lambda_test[j]) + "," +
           format_double(t.eot_b->lambda_test[j]) + "," +
           format_double(c.lambda_test_eot_delta[j]) + "\n";
  }
  return out;
}

inline std::string compare_text(const CompareTable& t, const std::string& name_a,
                                const std::string& name_b) {
  const RunComparison& c = t.cmp;
  std::ostringstream out;
  auto opt_epoch = [](const std::optional<std::size_t>& e) {
    return e ? std::to_string(*e) : "never";
  };
  out << "run A: " << name_a << "\n";
  out << "run B: " << name_b << "\n\n";
  // Column width fits the longest round-trip double (up to 24 characters).
  out << std::left << std::setw(20) << "metric" << std::setw(26) << "run A" << std::setw(26)
      << "run B" << "delta (A-B)\n";
  out << std::setw(20) << "it_epoch" << std::setw(26) << opt_epoch(c.it_epoch_a)
      << std::setw(26) << opt_epoch(c.it_epoch_b) << "\n";
  out << std::setw(20) << "eot_test_accuracy" << std::setw(26)
      << format_double(c.eot_test_accuracy_a) << std::setw(26)
      << format_double(c.eot_test_accuracy_b)
      << format_double(c.eot_test_accuracy_a - c.eot_test_accuracy_b) << "\n";
  out << std::setw(20) << "best_test_accuracy" << std::setw(26)
      << format_double(c.best_a.accuracy) << std::setw(26) << format_double(c.best_b.accuracy)
      << format_double(c.best_a.accuracy - c.best_b.accuracy) << "\n";
  out << std::setw(20) << "best_test_epoch" << std::setw(26) << c.best_a.epoch
      << std::setw(26) << c.best_b.epoch << "\n";
  out << std::setw(20) << "best_test_in_tpt" << std::setw(26) << tpt_flag(c.best_a.in_tpt)
      << std::setw(26) << tpt_flag(c.best_b.in_tpt) << "\n";
  out << "\nper-layer EOT mismatch deltas (A-B):\n";
  out << std::setw(8) << "layer" << std::setw(26) << "train" << "test\n";
  for (std::size_t j = 0; j < c.lambda_train_eot_delta.size(); ++j)
    out << std::setw(8) << (j + 1) << std::setw(26)
        << format_double(c.lambda_train_eot_delta[j])
        << format_double(c.lambda_test_eot_delta[j]) << "\n";
  out << "\nmean intermediate-layer test mismatch delta (A-B): "
      << format_double(c.mean_intermediate_test_delta) << "\n";
  return out.str();
}

}  // namespace detail

inline int cmd_compare(const std::string& run_dir_a, const std::string& run_dir_b,
                       const std::optional<std::string>& out_dir, std::ostream& out,
                       std::ostream& err) {
  try {
    const RunView a = load_run_view(RunPaths{run_dir_a});
    const RunView b = load_run_view(RunPaths{run_dir_b});
    const detail::CompareTable table = detail::build_compare_table(a, b);
    out << detail::compare_text(table, run_dir_a, run_dir_b);
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      detail::write_text_file(std::filesystem::path(*out_dir) / "compare.csv",
                              detail::compare_csv_text(table));
      detail::write_text_file(std::filesystem::path(*out_dir) / "compare.txt",
                              detail::compare_text(table, run_dir_a, run_dir_b));
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "compare error: " << e.what() << "\n";
    return kExitAnalysis;
  }
}

inline int cmd_early_exit(const std::string& run_dir, std::size_t layer,
                          const std::string& split, std::ostream& out, std::ostream& err) {
  try {
    if (split != "train" && split != "test")
      throw ContractViolation("early-exit: split must be train or test, got '" + split + "'");
    const RunPaths paths{run_dir};
    const ExperimentConfig cfg = parse_config_file(paths.config_echo().string());
    auto [train, test] = load_datasets(cfg.dataset);
    detail::maybe_normalize(cfg.dataset, train, test);
    const NetworkParams params =
        load_params(paths.params_eot_bin().string(), paths.params_eot_json().string());
    const ClassMeans means = compute_class_means(params, train);
    const Dataset& eval = split == "train" ? train : test;
    const EarlyExitResult result = early_exit_eval(params, eval, means, layer);
    const double cost = forward_cost_fraction(params.widths(), layer);
    out << "run dir: " << run_dir << "\n";
    out << "exit layer: " << layer << " of " << params.layer_count() << ", split: " << split
        << "\n";
    out << "ncc_accuracy: " << format_double(result.ncc_accuracy) << "\n";
    out << "agreement_with_classifier: " << format_double(result.agreement_with_classifier)
        << "\n";
    out << "forward_cost_fraction: " << format_double(cost) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "early-exit error: " << e.what() << "\n";
    return kExitAnalysis;
  }
}

inline int cmd_report(const std::string& run_dir, std::ostream& out, std::ostream& err) {
  try {
    const RunPaths paths{run_dir};
    const RunView view = load_run_view(paths);
    write_report(paths, view);
    out << "wrote " << paths.report_lambda_train().string() << "\n";
    out << "wrote " << paths.report_lambda_test().string() << "\n";
    out << "wrote " << paths.report_it_marker().string() << "\n";
    out << "it_epoch: " << detail::describe_it(view.it_epoch) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    err << "report error: " << e.what() << "\n";
    return kExitAnalysis;
  }
}

}  // namespace svsl
