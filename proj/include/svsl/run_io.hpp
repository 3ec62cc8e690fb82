#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svsl/error.hpp"
#include "svsl/snapshot.hpp"
#include "svsl/text.hpp"
#include "svsl/train.hpp"
#include "svsl/version.hpp"

namespace svsl {

// Everything a run leaves behind, addressed relative to its directory.
// metrics.csv and summary.json are byte-reproducible for a fixed config and
// seed, so they never embed the output path itself.
struct RunPaths {
  std::filesystem::path dir;

  std::filesystem::path metrics() const { return dir / "metrics.csv"; }
  std::filesystem::path summary() const { return dir / "summary.json"; }
  std::filesystem::path config_echo() const { return dir / "config.echo"; }
  std::filesystem::path params_eot_bin() const { return dir / "params_eot.bin"; }
  std::filesystem::path params_eot_json() const { return dir / "params_eot.json"; }
  std::filesystem::path params_it_bin() const { return dir / "params_it.bin"; }
  std::filesystem::path params_it_json() const { return dir / "params_it.json"; }
  std::filesystem::path report_dir() const { return dir / "report"; }
  std::filesystem::path report_lambda_train() const { return report_dir() / "lambda_train.csv"; }
  std::filesystem::path report_lambda_test() const { return report_dir() / "lambda_test.csv"; }
  std::filesystem::path report_it_marker() const { return report_dir() / "it_marker.csv"; }
};

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string() + ": cannot open for writing");
  out << text;
  out.close();
  if (!out) throw ParseError(path.string() + ": write failed");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline double parse_csv_double(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw ParseError(where + ": expected a number, got '" + cell + "'");
  return v;
}

inline std::size_t parse_csv_size(const std::string& cell, const std::string& where) {
  const double v = parse_csv_double(cell, where);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
    throw ParseError(where + ": expected a non-negative integer, got '" + cell + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

// Probed layer count shared by every record; records must agree.
inline std::size_t metrics_layer_count(const std::vector<EpochRecord>& records) {
  require(!records.empty(), "metrics: run produced no probe records");
  const std::size_t k = records.front().lambda_train.size();
  for (const auto& r : records)
    require(r.lambda_train.size() == k && r.lambda_test.size() == k &&
                r.variability.size() == k,
            "metrics: probe layer count changed between epochs");
  return k;
}

inline std::string metrics_header(std::size_t k) {
  std::string h = "epoch,split,accuracy,ce_loss,svsl_loss,in_tpt";
  for (std::size_t j = 1; j <= k; ++j) h += ",lambda_L" + std::to_string(j);
  for (std::size_t j = 1; j <= k; ++j) h += ",var_L" + std::to_string(j);
  return h;
}

// Two rows per probed epoch, train first. Accuracy and lambda columns are
// split-specific; losses, variability and the TPT flag describe the epoch as
// a whole and repeat on both rows.
inline std::string metrics_csv_text(const std::vector<EpochRecord>& records) {
  const std::size_t k = metrics_layer_count(records);
  std::string out = metrics_header(k) + "\n";
  for (const auto& r : records) {
    for (const bool is_train : {true, false}) {
      out += std::to_string(r.epoch);
      out += is_train ? ",train" : ",test";
      out += "," + format_double(is_train ? r.train_accuracy : r.test_accuracy);
      out += "," + format_double(r.ce_loss);
      out += "," + format_double(r.svsl_loss);
      out += r.in_tpt ? ",1" : ",0";
      const auto& lambda = is_train ? r.lambda_train : r.lambda_test;
      for (double v : lambda) out += "," + format_double(v);
      for (double v : r.variability) out += "," + format_double(v);
      out += "\n";
    }
  }
  return out;
}

// Strict inverse of metrics_csv_text: exact header, paired train/test rows
// per epoch, every cell numeric. The layer count is recovered from the
// header, so a reader needs no side information.
inline std::vector<EpochRecord> parse_metrics_csv(std::istream& in, const std::string& name) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError(name + ": empty file");
  const std::vector<std::string> cols = split(trim(header), ',');
  if (cols.size() < 8 || (cols.size() - 6) % 2 != 0)
    throw ParseError(name + ": header has " + std::to_string(cols.size()) + " columns");
  const std::size_t k = (cols.size() - 6) / 2;
  if (metrics_header(k) != trim(header))
    throw ParseError(name + ": unexpected header '" + trim(header) + "'");

  std::vector<EpochRecord> records;
  std::string line;
  std::size_t line_no = 1;
  bool expect_test = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = name + ": line " + std::to_string(line_no);
    const std::vector<std::string> cells = split(line, ',');
    if (cells.size() != 6 + 2 * k)
      throw ParseError(where + ": expected " + std::to_string(6 + 2 * k) +
                       " columns, got " + std::to_string(cells.size()));

    const std::size_t epoch = detail::parse_csv_size(cells[0], where);
    const std::string split_name = trim(cells[1]);
    const double accuracy = detail::parse_csv_double(cells[2], where);
    const double ce = detail::parse_csv_double(cells[3], where);
    const double svsl = detail::parse_csv_double(cells[4], where);
    const std::string tpt_cell = trim(cells[5]);
    if (tpt_cell != "0" && tpt_cell != "1")
      throw ParseError(where + ": in_tpt must be 0 or 1, got '" + cells[5] + "'");
    const bool in_tpt = tpt_cell == "1";
    std::vector<double> lambda(k), var(k);
    for (std::size_t j = 0; j < k; ++j) lambda[j] = detail::parse_csv_double(cells[6 + j], where);
    for (std::size_t j = 0; j < k; ++j)
      var[j] = detail::parse_csv_double(cells[6 + k + j], where);

    if (!expect_test) {
      if (split_name != "train")
        throw ParseError(where + ": expected a train row, got split '" + split_name + "'");
      EpochRecord r;
      r.epoch = epoch;
      r.train_accuracy = accuracy;
      r.ce_loss = ce;
      r.svsl_loss = svsl;
      r.in_tpt = in_tpt;
      r.lambda_train = std::move(lambda);
      r.variability = std::move(var);
      if (!records.empty() && records.back().epoch >= epoch)
        throw ParseError(where + ": epochs out of order");
      records.push_back(std::move(r));
      expect_test = true;
    } else {
      if (split_name != "test")
        throw ParseError(where + ": expected a test row, got split '" + split_name + "'");
      EpochRecord& r = records.back();
      if (epoch != r.epoch)
        throw ParseError(where + ": test row epoch " + std::to_string(epoch) +
                         " does not match its train row (" + std::to_string(r.epoch) + ")");
      if (in_tpt != r.in_tpt || ce != r.ce_loss || svsl != r.svsl_loss || var != r.variability)
        throw ParseError(where + ": epoch-level fields disagree between train and test rows");
      r.test_accuracy = accuracy;
      r.lambda_test = std::move(lambda);
      expect_test = false;
    }
  }
  if (expect_test) throw ParseError(name + ": trailing train row without its test row");
  if (records.empty()) throw ParseError(name + ": no data rows");
  return records;
}

inline std::vector<EpochRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  return parse_metrics_csv(in, path.string());
}

inline nlohmann::ordered_json make_summary(const TrainConfig& config, const RunResult& result) {
  const RunView view = to_view(result);
  const std::size_t k = metrics_layer_count(result.records);
  const EpochRecord& eot = result.records.back();
  require(eot.epoch == result.eot_epoch, "summary: final record is not the EOT epoch");
  const BestTestEpoch best = best_test_epoch(view);

  nlohmann::ordered_json j;
  j["format"] = "svsl-summary-v1";
  j["tool_version"] = kToolVersion;
  j["loss_mode"] = config.mode == LossMode::svsl ? "svsl" : "vanilla";
  j["seed"] = config.seed;
  j["epochs"] = config.epochs;
  j["layer_count"] = k;
  j["widths"] = result.final_params.widths();
  if (result.it_epoch)
    j["it_epoch"] = *result.it_epoch;
  else
    j["it_epoch"] = nullptr;
  j["eot_epoch"] = result.eot_epoch;
  j["eot"] = {{"train_accuracy", eot.train_accuracy},
              {"test_accuracy", eot.test_accuracy},
              {"ce_loss", eot.ce_loss},
              {"svsl_loss", eot.svsl_loss},
              {"in_tpt", eot.in_tpt}};
  j["best_test"] = {{"epoch", best.epoch}, {"accuracy", best.accuracy}, {"in_tpt", best.in_tpt}};

  // IT / EOT mismatch table per layer, both splits; the IT column is null
  // when the run never interpolated.
  nlohmann::ordered_json lambda;
  if (result.it_epoch) {
    const EpochRecord& at_it = detail::record_at_epoch(view, *result.it_epoch, "IT");
    lambda["train"]["it"] = at_it.lambda_train;
    lambda["test"]["it"] = at_it.lambda_test;
  } else {
    lambda["train"]["it"] = nullptr;
    lambda["test"]["it"] = nullptr;
  }
  lambda["train"]["eot"] = eot.lambda_train;
  lambda["test"]["eot"] = eot.lambda_test;
  j["lambda"] = lambda;

  j["snapshots"]["eot"] = "params_eot.bin";
  if (result.it_params)
    j["snapshots"]["it"] = "params_it.bin";
  else
    j["snapshots"]["it"] = nullptr;
  return j;
}

// Writes the full run directory: config echo (verbatim input bytes),
// metrics, summary, and parameter snapshots at EOT and, when reached, IT.
inline void persist_run(const RunPaths& paths, const std::string& config_text,
                        const TrainConfig& config, const RunResult& result) {
  std::filesystem::create_directories(paths.dir);
  detail::write_text_file(paths.config_echo(), config_text);
  detail::write_text_file(paths.metrics(), metrics_csv_text(result.records));
  detail::write_text_file(paths.summary(), make_summary(config, result).dump(2) + "\n");
  save_params(result.final_params, paths.params_eot_bin().string(),
              paths.params_eot_json().string());
  if (result.it_params)
    save_params(*result.it_params, paths.params_it_bin().string(),
                paths.params_it_json().string());
}

inline nlohmann::json read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Rebuilds the comparison-facing view of a run from its directory.
inline RunView load_run_view(const RunPaths& paths) {
  RunView view;
  view.records = read_metrics_csv(paths.metrics());
  const nlohmann::json summary = read_summary(paths.summary());
  try {
    if (summary.at("format") != "svsl-summary-v1")
      throw ParseError(paths.summary().string() + ": unknown summary format");
    if (!summary.at("it_epoch").is_null())
      view.it_epoch = summary.at("it_epoch").get<std::size_t>();
    view.eot_epoch = summary.at("eot_epoch").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(paths.summary().string() + ": " + e.what());
  }
  require(view.records.back().epoch == view.eot_epoch,
          paths.metrics().string() + ": last probed epoch disagrees with summary eot_epoch");
  return view;
}

// Plot-ready long-form tables: one (epoch, layer, lambda) row per probed
// epoch and layer, one file per split, plus the IT marker. Pure functions of
// the run view, so regeneration is byte-identical.
inline std::string report_lambda_text(const std::vector<EpochRecord>& records, bool train_split) {
  const std::size_t k = metrics_layer_count(records);
  std::string out = "epoch,layer,lambda\n";
  for (const auto& r : records) {
    const auto& lambda = train_split ? r.lambda_train : r.lambda_test;
    for (std::size_t j = 0; j < k; ++j)
      out += std::to_string(r.epoch) + "," + std::to_string(j + 1) + "," +
             format_double(lambda[j]) + "\n";
  }
  return out;
}

inline std::string report_it_marker_text(const std::optional<std::size_t>& it_epoch) {
  std::string out = "it_epoch\n";
  if (it_epoch) out += std::to_string(*it_epoch) + "\n";
  return out;
}

inline void write_report(const RunPaths& paths, const RunView& view) {
  std::filesystem::create_directories(paths.report_dir());
  detail::write_text_file(paths.report_lambda_train(), report_lambda_text(view.records, true));
  detail::write_text_file(paths.report_lambda_test(), report_lambda_text(view.records, false));
  detail::write_text_file(paths.report_it_marker(), report_it_marker_text(view.it_epoch));
}

}  // namespace svsl
