#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "svsl/run_io.hpp"
#include "svsl/snapshot.hpp"
#include "testing_util.hpp"

using namespace svsl;

namespace {

std::vector<EpochRecord> sample_records(std::size_t epochs, std::size_t k,
                                        std::uint64_t seed) {
  RngState rng(seed);
  std::vector<EpochRecord> records;
  for (std::size_t e = 0; e < epochs; ++e) {
    EpochRecord r;
    r.epoch = e * 2;  // sparse probe cadence
    r.train_accuracy = rng.next_uniform();
    r.test_accuracy = rng.next_uniform();
    r.ce_loss = rng.next_gaussian();
    r.svsl_loss = std::fabs(rng.next_gaussian()) * 1e-7;
    for (std::size_t j = 0; j < k; ++j) {
      r.lambda_train.push_back(rng.next_uniform());
      r.lambda_test.push_back(rng.next_uniform());
      r.variability.push_back(std::fabs(rng.next_gaussian()));
    }
    r.in_tpt = e > epochs / 2;
    records.push_back(std::move(r));
  }
  return records;
}

bool records_equal(const EpochRecord& a, const EpochRecord& b) {
  return a.epoch == b.epoch && a.train_accuracy == b.train_accuracy &&
         a.test_accuracy == b.test_accuracy && a.ce_loss == b.ce_loss &&
         a.svsl_loss == b.svsl_loss && a.lambda_train == b.lambda_train &&
         a.lambda_test == b.lambda_test && a.variability == b.variability &&
         a.in_tpt == b.in_tpt;
}

RunResult sample_result(std::size_t epochs, std::size_t k, std::uint64_t seed) {
  RunResult result;
  result.records = sample_records(epochs, k, seed);
  result.records.back().epoch = (epochs - 1) * 2;
  result.eot_epoch = result.records.back().epoch;
  result.it_epoch = result.records[epochs / 2].epoch;
  RngState rng(seed + 1);
  std::vector<LayerSpec> specs;
  for (std::size_t j = 0; j + 1 < k; ++j) specs.push_back({3, Activation::relu});
  specs.push_back({4, Activation::identity});
  result.final_params = init_network(5, specs, rng);
  result.it_params = init_network(5, specs, rng);
  return result;
}

}  // namespace

TEST_CASE("metrics csv round-trips every field bitwise") {
  const auto records = sample_records(7, 4, 3);
  const std::string text = metrics_csv_text(records);
  std::istringstream in(text);
  const auto parsed = parse_metrics_csv(in, "metrics");
  REQUIRE(parsed.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) CHECK(records_equal(parsed[i], records[i]));
}

TEST_CASE("metrics csv layout: header first, two rows per epoch, train first") {
  const auto records = sample_records(2, 2, 9);
  const std::string text = metrics_csv_text(records);
  std::istringstream in(text);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "epoch,split,accuracy,ce_loss,svsl_loss,in_tpt,lambda_L1,lambda_L2,var_L1,var_L2");
  REQUIRE(std::getline(in, line));
  CHECK(line.find("0,train,") == 0);
  REQUIRE(std::getline(in, line));
  CHECK(line.find("0,test,") == 0);
}

TEST_CASE("metrics csv parser rejects malformed input") {
  const auto records = sample_records(3, 2, 5);
  const std::string good = metrics_csv_text(records);

  auto parse_str = [](const std::string& s) {
    std::istringstream in(s);
    return parse_metrics_csv(in, "bad");
  };

  CHECK_THROWS_AS(parse_str(""), ParseError);
  CHECK_THROWS_AS(parse_str("epoch,split\n"), ParseError);
  CHECK_THROWS_AS(parse_str("nonsense,header,with,eight,columns,x,y,z\n"), ParseError);

  // Drop the first train row so a test row leads.
  std::istringstream in(good);
  std::string header, train_row, rest;
  std::getline(in, header);
  std::getline(in, train_row);
  std::ostringstream rebuilt;
  rebuilt << header << "\n";
  std::string line;
  while (std::getline(in, line)) rebuilt << line << "\n";
  CHECK_THROWS_AS(parse_str(rebuilt.str()), ParseError);

  // Truncate after a train row.
  std::ostringstream half;
  half << header << "\n" << train_row << "\n";
  CHECK_THROWS_AS(parse_str(half.str()), ParseError);

  // Corrupt a numeric cell.
  std::string corrupt = good;
  corrupt.replace(corrupt.find("train,"), 6, "train,x");
  CHECK_THROWS_AS(parse_str(corrupt), ParseError);

  try {
    parse_str(header + "\n0,train,0.5,0.1,0,1,0.1,0.1,0.1\n");
    FAIL("expected a column-count error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("summary json carries run facts and the IT/EOT lambda table") {
  const RunResult result = sample_result(5, 3, 11);
  TrainConfig config;
  config.mode = LossMode::svsl;
  config.seed = 77;
  config.epochs = 9;
  const auto summary = make_summary(config, result);

  CHECK(summary.at("loss_mode") == "svsl");
  CHECK(summary.at("seed") == 77);
  CHECK(summary.at("eot_epoch") == result.eot_epoch);
  CHECK(summary.at("it_epoch") == *result.it_epoch);
  CHECK(summary.at("layer_count") == 3);
  CHECK(summary.at("widths").get<std::vector<std::size_t>>() ==
        result.final_params.widths());

  const auto& eot = result.records.back();
  CHECK(summary.at("eot").at("test_accuracy") == eot.test_accuracy);
  CHECK(summary.at("lambda").at("test").at("eot").get<std::vector<double>>() ==
        eot.lambda_test);

  const BestTestEpoch best = best_test_epoch(to_view(result));
  CHECK(summary.at("best_test").at("epoch") == best.epoch);
  CHECK(summary.at("best_test").at("accuracy") == best.accuracy);

  RunResult no_it = sample_result(5, 3, 11);
  no_it.it_epoch.reset();
  no_it.it_params.reset();
  const auto summary2 = make_summary(config, no_it);
  CHECK(summary2.at("it_epoch").is_null());
  CHECK(summary2.at("lambda").at("train").at("it").is_null());
  CHECK(summary2.at("snapshots").at("it").is_null());
}

TEST_CASE("persist_run writes a reloadable run directory") {
  const auto dir = testutil::make_temp_dir("runio");
  const RunPaths paths{dir};
  const RunResult result = sample_result(4, 3, 21);
  TrainConfig config;
  config.seed = 5;
  const std::string echo = "[dataset]\nkind = gaussian\n";

  persist_run(paths, echo, config, result);
  CHECK(std::filesystem::exists(paths.metrics()));
  CHECK(std::filesystem::exists(paths.summary()));
  CHECK(std::filesystem::exists(paths.params_eot_bin()));
  CHECK(std::filesystem::exists(paths.params_it_bin()));
  CHECK(detail::read_text_file(paths.config_echo()) == echo);

  const RunView view = load_run_view(paths);
  REQUIRE(view.records.size() == result.records.size());
  for (std::size_t i = 0; i < view.records.size(); ++i)
    CHECK(records_equal(view.records[i], result.records[i]));
  CHECK(view.it_epoch == result.it_epoch);
  CHECK(view.eot_epoch == result.eot_epoch);

  const NetworkParams reloaded =
      load_params(paths.params_eot_bin().string(), paths.params_eot_json().string());
  REQUIRE(reloaded.layer_count() == result.final_params.layer_count());
  for (std::size_t j = 0; j < reloaded.layer_count(); ++j) {
    CHECK(reloaded.weights[j] == result.final_params.weights[j]);
    CHECK(reloaded.biases[j] == result.final_params.biases[j]);
  }
}

TEST_CASE("snapshot serialization is bit-exact and validates its sidecar") {
  const auto dir = testutil::make_temp_dir("snap");
  RngState rng(31);
  const NetworkParams params = init_network(
      4, {{6, Activation::relu}, {3, Activation::identity}}, rng);
  const std::string bin = (dir / "p.bin").string();
  const std::string sidecar = (dir / "p.json").string();
  save_params(params, bin, sidecar);

  const NetworkParams loaded = load_params(bin, sidecar);
  CHECK(loaded.input_dim == 4);
  for (std::size_t j = 0; j < params.layer_count(); ++j) {
    CHECK(loaded.weights[j] == params.weights[j]);
    CHECK(loaded.biases[j] == params.biases[j]);
    CHECK(loaded.layers[j].activation == params.layers[j].activation);
  }

  // Tampered sidecar widths are caught.
  {
    std::ifstream in(sidecar);
    nlohmann::json j;
    in >> j;
    j["widths"][0] = 9;
    std::ofstream out(sidecar);
    out << j.dump(2);
  }
  CHECK_THROWS_AS(load_params(bin, sidecar), ParseError);

  // Truncated binary reports the byte offset.
  save_params(params, bin, sidecar);
  const auto size = std::filesystem::file_size(bin);
  std::filesystem::resize_file(bin, size - 5);
  try {
    load_params(bin, sidecar);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
}

TEST_CASE("report files are tidy per-layer tables and regenerate byte-identically") {
  const auto dir = testutil::make_temp_dir("report");
  const RunPaths paths{dir};
  const RunResult result = sample_result(6, 4, 41);
  TrainConfig config;
  persist_run(paths, "[x]\n", config, result);
  const RunView view = load_run_view(paths);

  write_report(paths, view);
  const std::string train_a = detail::read_text_file(paths.report_lambda_train());
  const std::string test_a = detail::read_text_file(paths.report_lambda_test());
  const std::string marker_a = detail::read_text_file(paths.report_it_marker());

  // Row count: one per probed epoch and layer, plus the header.
  const std::size_t expected = result.records.size() * 4 + 1;
  const auto count_lines = [](const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
  };
  CHECK(count_lines(train_a) == expected);
  CHECK(count_lines(test_a) == expected);
  CHECK(marker_a == "it_epoch\n" + std::to_string(*view.it_epoch) + "\n");

  write_report(paths, view);
  CHECK(detail::read_text_file(paths.report_lambda_train()) == train_a);
  CHECK(detail::read_text_file(paths.report_lambda_test()) == test_a);
  CHECK(detail::read_text_file(paths.report_it_marker()) == marker_a);

  // First data row is epoch of the first record, layer 1, its train lambda.
  std::istringstream in(train_a);
  std::string header, first;
  std::getline(in, header);
  CHECK(header == "epoch,layer,lambda");
  std::getline(in, first);
  CHECK(first == std::to_string(result.records[0].epoch) + ",1," +
                     format_double(result.records[0].lambda_train[0]));
}
