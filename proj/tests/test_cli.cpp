#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "svsl/cli.hpp"
#include "testing_util.hpp"

using namespace svsl;

namespace {

std::string base_config(const std::string& hidden, const std::string& mode, double alpha) {
  std::ostringstream out;
  out << "[dataset]\n"
         "kind = gaussian\n"
         "classes = 3\n"
         "dim = 5\n"
         "train_per_class = 30\n"
         "test_per_class = 12\n"
         "sigma = 0.6\n"
         "seed = 7\n"
         "center_scale = 3\n"
         "\n"
         "[model]\n"
         "hidden_widths = "
      << hidden
      << "\n"
         "\n"
         "[train]\n"
         "epochs = 6\n"
         "batch_size = 16\n"
         "learning_rate = 0.1\n"
         "seed = 11\n"
         "\n"
         "[loss]\n"
         "mode = "
      << mode << "\nalpha = " << format_double(alpha) << "\ngamma = 1\n";
  return out.str();
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_train(const std::string& config_text, const std::filesystem::path& work,
                    std::optional<std::uint64_t> seed = std::nullopt,
                    const std::string& run_name = "run") {
  const auto config_path = work / (run_name + ".conf");
  std::ofstream(config_path) << config_text;
  TrainOptions options;
  options.config_path = config_path.string();
  options.out_dir = (work / run_name).string();
  options.seed = seed;
  std::ostringstream out, err;
  const int code = cmd_train(options, out, err);
  return {code, out.str(), err.str()};
}

double printed_value(const std::string& text, const std::string& key) {
  const auto pos = text.find(key);
  REQUIRE(pos != std::string::npos);
  const auto start = pos + key.size();
  const auto end = text.find('\n', start);
  return std::strtod(text.substr(start, end - start).c_str(), nullptr);
}

std::string file_bytes(const std::filesystem::path& p) { return detail::read_text_file(p); }

}  // namespace

TEST_CASE("train command produces a complete, self-consistent run directory") {
  const auto work = testutil::make_temp_dir("cli_train");
  const std::string config = base_config("8,6", "svsl", 0.01);
  const CliResult r = run_train(config, work);
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("run dir: ") != std::string::npos);
  CHECK(r.out.find("eot train_accuracy: ") != std::string::npos);

  const RunPaths paths{work / "run"};
  CHECK(file_bytes(paths.config_echo()) == config);

  const auto records = read_metrics_csv(paths.metrics());
  REQUIRE(records.size() == 6);  // probe_every defaults to every epoch
  const auto summary = read_summary(paths.summary());
  CHECK(summary.at("epochs") == 6);
  CHECK(summary.at("loss_mode") == "svsl");
  CHECK(summary.at("layer_count") == 3);

  // best_test in the summary is the earliest row-wise max of the metrics table.
  std::size_t best_epoch = records[0].epoch;
  double best_acc = records[0].test_accuracy;
  for (const auto& rec : records)
    if (rec.test_accuracy > best_acc) {
      best_acc = rec.test_accuracy;
      best_epoch = rec.epoch;
    }
  CHECK(summary.at("best_test").at("epoch") == best_epoch);
  CHECK(summary.at("best_test").at("accuracy") == best_acc);
  CHECK(summary.at("eot").at("test_accuracy") == records.back().test_accuracy);
}

TEST_CASE("train maps bad inputs to the config exit code") {
  const auto work = testutil::make_temp_dir("cli_badcfg");
  std::ostringstream out, err;

  TrainOptions missing;
  missing.config_path = (work / "nope.conf").string();
  missing.out_dir = (work / "r").string();
  CHECK(cmd_train(missing, out, err) == kExitConfig);
  CHECK(err.str().find("cannot open") != std::string::npos);

  std::string broken = base_config("8", "vanilla", 0.0);
  const auto pos = broken.find("epochs = 6");
  broken.replace(pos, 10, "epochs = abc");
  err.str("");
  const CliResult r = run_train(broken, work, std::nullopt, "broken");
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("train.epochs") != std::string::npos);

  // No [output] section and no --out.
  const auto config_path = work / "noout.conf";
  std::ofstream(config_path) << base_config("8", "vanilla", 0.0);
  TrainOptions no_out;
  no_out.config_path = config_path.string();
  std::ostringstream out2, err2;
  CHECK(cmd_train(no_out, out2, err2) == kExitConfig);
  CHECK(err2.str().find("no output directory") != std::string::npos);
}

TEST_CASE("svsl with alpha zero trains exactly like vanilla") {
  const auto work = testutil::make_temp_dir("cli_alpha0");
  const CliResult a = run_train(base_config("8,6", "svsl", 0.0), work, std::nullopt, "a");
  const CliResult b = run_train(base_config("8,6", "vanilla", 0.0), work, std::nullopt, "b");
  REQUIRE(a.code == kExitOk);
  REQUIRE(b.code == kExitOk);
  CHECK(file_bytes(work / "a" / "metrics.csv") == file_bytes(work / "b" / "metrics.csv"));
}

TEST_CASE("identical configs give byte-identical metrics and summary") {
  const auto work = testutil::make_temp_dir("cli_det");
  const std::string config = base_config("8,6", "svsl", 0.01);
  REQUIRE(run_train(config, work, std::nullopt, "first").code == kExitOk);
  REQUIRE(run_train(config, work, std::nullopt, "second").code == kExitOk);
  CHECK(file_bytes(work / "first" / "metrics.csv") ==
        file_bytes(work / "second" / "metrics.csv"));
  CHECK(file_bytes(work / "first" / "summary.json") ==
        file_bytes(work / "second" / "summary.json"));
  CHECK(file_bytes(work / "first" / "params_eot.bin") ==
        file_bytes(work / "second" / "params_eot.bin"));
}

TEST_CASE("--seed overrides the training seed without touching the echoed config") {
  const auto work = testutil::make_temp_dir("cli_seed");
  const std::string config = base_config("8,6", "svsl", 0.01);
  REQUIRE(run_train(config, work, std::nullopt, "base").code == kExitOk);
  REQUIRE(run_train(config, work, 99, "reseeded").code == kExitOk);

  CHECK(file_bytes(work / "base" / "config.echo") ==
        file_bytes(work / "reseeded" / "config.echo"));
  CHECK(file_bytes(work / "base" / "metrics.csv") !=
        file_bytes(work / "reseeded" / "metrics.csv"));
  CHECK(read_summary(RunPaths{work / "reseeded"}.summary()).at("seed") == 99);
  CHECK(read_summary(RunPaths{work / "base"}.summary()).at("seed") == 11);
}

TEST_CASE("comparing a run with itself reports zero deltas") {
  const auto work = testutil::make_temp_dir("cli_cmp_self");
  REQUIRE(run_train(base_config("8,6", "svsl", 0.01), work).code == kExitOk);
  const std::string dir = (work / "run").string();
  std::ostringstream out, err;
  const auto cmp_dir = work / "cmp";
  REQUIRE(cmd_compare(dir, dir, cmp_dir.string(), out, err) == kExitOk);
  CHECK(out.str().find("mean intermediate-layer test mismatch delta (A-B): 0") !=
        std::string::npos);

  std::ifstream csv(cmp_dir / "compare.csv");
  REQUIRE(csv);
  std::string line;
  std::getline(csv, line);
  CHECK(line == "metric,layer,run_a,run_b,delta_a_minus_b");
  while (std::getline(csv, line)) {
    if (line.rfind("lambda_", 0) != 0) continue;
    const auto cells = split(line, ',');
    REQUIRE(cells.size() == 5);
    CHECK(cells[2] == cells[3]);
    CHECK(std::strtod(cells[4].c_str(), nullptr) == 0.0);
  }
  CHECK(std::filesystem::exists(cmp_dir / "compare.txt"));
}

TEST_CASE("compare csv mirrors compare_views on the reloaded runs") {
  const auto work = testutil::make_temp_dir("cli_cmp_pair");
  REQUIRE(run_train(base_config("8,6", "svsl", 0.05), work, std::nullopt, "a").code == kExitOk);
  REQUIRE(run_train(base_config("8,6", "vanilla", 0.0), work, std::nullopt, "b").code ==
          kExitOk);
  std::ostringstream out, err;
  const auto cmp_dir = work / "cmp";
  REQUIRE(cmd_compare((work / "a").string(), (work / "b").string(), cmp_dir.string(), out,
                      err) == kExitOk);

  const RunComparison cmp =
      compare_views(load_run_view(RunPaths{work / "a"}), load_run_view(RunPaths{work / "b"}));
  std::ifstream csv(cmp_dir / "compare.csv");
  std::string line;
  std::size_t train_rows = 0;
  bool saw_best_in_tpt = false;
  while (std::getline(csv, line)) {
    const auto cells = split(line, ',');
    if (cells[0] == "lambda_train_eot") {
      const std::size_t j = std::strtoull(cells[1].c_str(), nullptr, 10);
      REQUIRE(j >= 1);
      CHECK(std::strtod(cells[4].c_str(), nullptr) == cmp.lambda_train_eot_delta[j - 1]);
      ++train_rows;
    }
    if (cells[0] == "mean_intermediate_lambda_test_delta")
      CHECK(std::strtod(cells[4].c_str(), nullptr) == cmp.mean_intermediate_test_delta);
    if (cells[0] == "best_test_in_tpt") saw_best_in_tpt = true;
  }
  CHECK(train_rows == cmp.lambda_train_eot_delta.size());
  CHECK(saw_best_in_tpt);
}

TEST_CASE("compare rejects runs with different layer counts") {
  const auto work = testutil::make_temp_dir("cli_cmp_bad");
  REQUIRE(run_train(base_config("8,6", "vanilla", 0.0), work, std::nullopt, "deep").code ==
          kExitOk);
  REQUIRE(run_train(base_config("8", "vanilla", 0.0), work, std::nullopt, "shallow").code ==
          kExitOk);
  std::ostringstream out, err;
  CHECK(cmd_compare((work / "deep").string(), (work / "shallow").string(), std::nullopt, out,
                    err) == kExitAnalysis);
  CHECK(!err.str().empty());
}

TEST_CASE("early-exit at the final layer reproduces the end-of-training probe") {
  const auto work = testutil::make_temp_dir("cli_exit");
  REQUIRE(run_train(base_config("8,6", "svsl", 0.01), work).code == kExitOk);
  const RunPaths paths{work / "run"};
  const auto records = read_metrics_csv(paths.metrics());
  const EpochRecord& eot = records.back();

  for (const std::string& split : {std::string("test"), std::string("train")}) {
    std::ostringstream out, err;
    INFO(split);
    REQUIRE(cmd_early_exit(paths.dir.string(), 3, split, out, err) == kExitOk);
    const double agreement = printed_value(out.str(), "agreement_with_classifier: ");
    const double lambda = split == "test" ? eot.lambda_test[2] : eot.lambda_train[2];
    CHECK(agreement == 1.0 - lambda);
    CHECK(printed_value(out.str(), "forward_cost_fraction: ") == 1.0);
  }

  // Truncating at layer 1 costs the layer-1 MACs only.
  std::ostringstream out, err;
  REQUIRE(cmd_early_exit(paths.dir.string(), 1, "test", out, err) == kExitOk);
  const std::vector<std::size_t> widths = {5, 8, 6, 3};
  CHECK(printed_value(out.str(), "forward_cost_fraction: ") ==
        forward_cost_fraction(widths, 1));
  const double acc = printed_value(out.str(), "ncc_accuracy: ");
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("early-exit rejects bad layers and splits with the analysis exit code") {
  const auto work = testutil::make_temp_dir("cli_exit_bad");
  REQUIRE(run_train(base_config("8,6", "vanilla", 0.0), work).code == kExitOk);
  std::ostringstream out, err;
  CHECK(cmd_early_exit((work / "run").string(), 9, "test", out, err) == kExitAnalysis);
  CHECK(err.str().find("layer 9") != std::string::npos);
  std::ostringstream out2, err2;
  CHECK(cmd_early_exit((work / "run").string(), 1, "validation", out2, err2) ==
        kExitAnalysis);
  std::ostringstream out3, err3;
  CHECK(cmd_early_exit((work / "missing").string(), 1, "test", out3, err3) == kExitAnalysis);
}

TEST_CASE("report renders per-layer tables from a finished run") {
  const auto work = testutil::make_temp_dir("cli_report");
  REQUIRE(run_train(base_config("8,6", "svsl", 0.01), work).code == kExitOk);
  const RunPaths paths{work / "run"};
  std::ostringstream out, err;
  REQUIRE(cmd_report(paths.dir.string(), out, err) == kExitOk);
  CHECK(out.str().find("it_epoch: ") != std::string::npos);
  REQUIRE(std::filesystem::exists(paths.report_lambda_test()));

  const auto records = read_metrics_csv(paths.metrics());
  std::ifstream table(paths.report_lambda_test());
  std::string line;
  std::size_t rows = 0;
  while (std::getline(table, line)) ++rows;
  CHECK(rows == records.size() * 3 + 1);

  const std::string before = file_bytes(paths.report_lambda_test());
  std::ostringstream out2, err2;
  REQUIRE(cmd_report(paths.dir.string(), out2, err2) == kExitOk);
  CHECK(file_bytes(paths.report_lambda_test()) == before);

  std::ostringstream out3, err3;
  CHECK(cmd_report((work / "absent").string(), out3, err3) == kExitAnalysis);
}
