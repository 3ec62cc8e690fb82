#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svsl/data.hpp"
#include "svsl/error.hpp"
#include "svsl/model.hpp"
#include "svsl/text.hpp"
#include "svsl/train.hpp"

namespace svsl {

// Experiment configuration file: [section] headers over key = value lines,
// full-line '#' comments. Parsing is strict -- an unknown section or key, a
// duplicate key, or a key that does not apply to the chosen dataset kind is
// an error, so typos never silently fall back to defaults.
//
// Sections and keys (* = required, rest shown with defaults):
//   [dataset] kind* = gaussian|idx|csv
//     gaussian: classes*, dim*, train_per_class*, test_per_class*, sigma*,
//               seed*, centers = random (or explicit "x,y,..; x,y,.."),
//               center_scale = 1, center_seed = <derived from seed>
//     idx:      train_images*, train_labels*, test_images*, test_labels*
//     csv:      train_path*, test_path*, label_column = 0, has_header = false
//   [model]   hidden_widths* = comma list (may be empty), activation = relu
//   [train]   epochs*, batch_size*, learning_rate*, seed*,
//             momentum = 0.9, it_threshold = 0.995, probe_every = 1
//   [loss]    mode = vanilla, alpha = 0, gamma = 1,
//             include_final_layer = true, tpt_only = false
//   [output]  dir (required unless --out is passed)

struct DatasetConfig {
  enum class Kind { gaussian, idx, csv };
  Kind kind = Kind::gaussian;

  // gaussian
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::size_t train_per_class = 0;
  std::size_t test_per_class = 0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
  bool centers_random = true;
  double center_scale = 1.0;
  std::optional<std::uint64_t> center_seed;
  std::vector<std::vector<double>> explicit_centers;

  // idx
  std::string train_images, train_labels, test_images, test_labels;

  // csv
  std::string train_path, test_path;
  std::size_t label_column = 0;
  bool has_header = false;
};

struct ModelConfig {
  std::vector<std::size_t> hidden_widths;
  Activation hidden_activation = Activation::relu;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  std::string output_dir;
};

namespace detail {

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
  bool consumed = false;
};

using ConfigMap = std::map<std::string, ConfigEntry>;  // "section.key" -> entry

inline ConfigMap read_entries(std::istream& in, const std::string& path) {
  static const std::set<std::string> known_sections = {"dataset", "model", "train",
                                                       "loss", "output"};
  ConfigMap entries;
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    if (text.front() == '[') {
      if (text.back() != ']')
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": malformed section header '" + text + "'");
      section = trim(text.substr(1, text.size() - 2));
      if (!known_sections.count(section))
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": unknown section '[" + section + "]'");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": expected 'key = value', got '" + text + "'");
    if (section.empty())
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": key before any [section] header");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    const std::string full = section + "." + key;
    if (entries.count(full))
      throw ParseError(path + ": line " + std::to_string(line_no) + ": duplicate key '" +
                       full + "' (first at line " + std::to_string(entries[full].line) + ")");
    entries[full] = {value, line_no, false};
  }
  return entries;
}

class ConfigReader {
 public:
  ConfigReader(ConfigMap entries, std::string path)
      : entries_(std::move(entries)), path_(std::move(path)) {}

  bool has(const std::string& full_key) const { return entries_.count(full_key) > 0; }

  std::optional<std::string> take(const std::string& full_key) {
    auto it = entries_.find(full_key);
    if (it == entries_.end()) return std::nullopt;
    it->second.consumed = true;
    return it->second.value;
  }

  std::string require_key(const std::string& full_key) {
    auto v = take(full_key);
    if (!v) throw ParseError(path_ + ": missing required key '" + full_key + "'");
    return *v;
  }

  [[noreturn]] void fail(const std::string& full_key, const std::string& why) const {
    auto it = entries_.find(full_key);
    const std::string loc =
        it != entries_.end() ? ": line " + std::to_string(it->second.line) : "";
    throw ParseError(path_ + loc + ": key '" + full_key + "': " + why);
  }

  void reject_unconsumed() const {
    for (const auto& [key, entry] : entries_)
      if (!entry.consumed)
        throw ParseError(path_ + ": line " + std::to_string(entry.line) +
                         ": unknown key '" + key + "'");
  }

  std::uint64_t as_u64(const std::string& key, const std::string& value) {
    try {
      std::size_t used = 0;
      if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
      const std::uint64_t v = std::stoull(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      fail(key, "expected a non-negative integer, got '" + value + "'");
    }
  }

  double as_double(const std::string& key, const std::string& value) {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return v;
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + value + "'");
    }
  }

  bool as_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    fail(key, "expected true/false, got '" + value + "'");
  }

 private:
  ConfigMap entries_;
  std::string path_;
};

inline std::vector<std::size_t> parse_width_list(ConfigReader& reader, const std::string& key,
                                                 const std::string& value) {
  std::vector<std::size_t> widths;
  if (trim(value).empty()) return widths;
  for (const auto& part : split(value, ',')) {
    const std::uint64_t w = reader.as_u64(key, trim(part));
    if (w == 0) reader.fail(key, "layer width 0 is not allowed");
    widths.push_back(static_cast<std::size_t>(w));
  }
  return widths;
}

inline std::vector<std::vector<double>> parse_center_list(ConfigReader& reader,
                                                          const std::string& key,
                                                          const std::string& value) {
  std::vector<std::vector<double>> centers;
  for (const auto& row : split(value, ';')) {
    std::vector<double> coords;
    for (const auto& cell : split(row, ','))
      coords.push_back(reader.as_double(key, trim(cell)));
    centers.push_back(std::move(coords));
  }
  return centers;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in, const std::string& path) {
  detail::ConfigReader reader(detail::read_entries(in, path), path);
  ExperimentConfig cfg;

  // [dataset]
  const std::string kind = reader.require_key("dataset.kind");
  auto reject_if_present = [&](const char* key, const std::string& why) {
    if (reader.has(key)) reader.fail(key, why);
  };
  if (kind == "gaussian") {
    cfg.dataset.kind = DatasetConfig::Kind::gaussian;
    cfg.dataset.classes = reader.as_u64("dataset.classes", reader.require_key("dataset.classes"));
    cfg.dataset.dim = reader.as_u64("dataset.dim", reader.require_key("dataset.dim"));
    cfg.dataset.train_per_class =
        reader.as_u64("dataset.train_per_class", reader.require_key("dataset.train_per_class"));
    cfg.dataset.test_per_class =
        reader.as_u64("dataset.test_per_class", reader.require_key("dataset.test_per_class"));
    cfg.dataset.sigma = reader.as_double("dataset.sigma", reader.require_key("dataset.sigma"));
    cfg.dataset.seed = reader.as_u64("dataset.seed", reader.require_key("dataset.seed"));
    if (auto v = reader.take("dataset.centers")) {
      if (*v == "random") {
        cfg.dataset.centers_random = true;
      } else {
        cfg.dataset.centers_random = false;
        cfg.dataset.explicit_centers = detail::parse_center_list(reader, "dataset.centers", *v);
      }
    }
    if (auto v = reader.take("dataset.center_scale"))
      cfg.dataset.center_scale = reader.as_double("dataset.center_scale", *v);
    if (auto v = reader.take("dataset.center_seed"))
      cfg.dataset.center_seed = reader.as_u64("dataset.center_seed", *v);
    if (cfg.dataset.sigma <= 0.0) reader.fail("dataset.sigma", "must be > 0");
    if (cfg.dataset.classes < 2) reader.fail("dataset.classes", "need at least 2 classes");
    if (!cfg.dataset.centers_random) {
      if (cfg.dataset.explicit_centers.size() != cfg.dataset.classes)
        reader.fail("dataset.centers", "expected one center per class");
      for (const auto& c : cfg.dataset.explicit_centers)
        if (c.size() != cfg.dataset.dim)
          reader.fail("dataset.centers", "every center needs exactly dim coordinates");
    }
  } else if (kind == "idx") {
    cfg.dataset.kind = DatasetConfig::Kind::idx;
    cfg.dataset.train_images = reader.require_key("dataset.train_images");
    cfg.dataset.train_labels = reader.require_key("dataset.train_labels");
    cfg.dataset.test_images = reader.require_key("dataset.test_images");
    cfg.dataset.test_labels = reader.require_key("dataset.test_labels");
  } else if (kind == "csv") {
    cfg.dataset.kind = DatasetConfig::Kind::csv;
    cfg.dataset.train_path = reader.require_key("dataset.train_path");
    cfg.dataset.test_path = reader.require_key("dataset.test_path");
    if (auto v = reader.take("dataset.label_column"))
      cfg.dataset.label_column = reader.as_u64("dataset.label_column", *v);
    if (auto v = reader.take("dataset.has_header"))
      cfg.dataset.has_header = reader.as_bool("dataset.has_header", *v);
  } else {
    reader.fail("dataset.kind", "expected gaussian, idx or csv, got '" + kind + "'");
  }
  if (kind != "gaussian") {
    for (const char* key :
         {"dataset.classes", "dataset.dim", "dataset.train_per_class",
          "dataset.test_per_class", "dataset.sigma", "dataset.seed", "dataset.centers",
          "dataset.center_scale", "dataset.center_seed"})
      reject_if_present(key, "only valid for dataset kind 'gaussian'");
  }
  if (kind != "idx") {
    for (const char* key : {"dataset.train_images", "dataset.train_labels",
                            "dataset.test_images", "dataset.test_labels"})
      reject_if_present(key, "only valid for dataset kind 'idx'");
  }
  if (kind != "csv") {
    for (const char* key : {"dataset.train_path", "dataset.test_path",
                            "dataset.label_column", "dataset.has_header"})
      reject_if_present(key, "only valid for dataset kind 'csv'");
  }

  // [model]
  cfg.model.hidden_widths =
      detail::parse_width_list(reader, "model.hidden_widths",
                               reader.require_key("model.hidden_widths"));
  if (auto v = reader.take("model.activation")) {
    if (*v == "relu")
      cfg.model.hidden_activation = Activation::relu;
    else if (*v == "identity")
      cfg.model.hidden_activation = Activation::identity;
    else
      reader.fail("model.activation", "expected relu or identity, got '" + *v + "'");
  }

  // [train]
  cfg.train.epochs = reader.as_u64("train.epochs", reader.require_key("train.epochs"));
  cfg.train.batch_size =
      reader.as_u64("train.batch_size", reader.require_key("train.batch_size"));
  cfg.train.learning_rate =
      reader.as_double("train.learning_rate", reader.require_key("train.learning_rate"));
  cfg.train.seed = reader.as_u64("train.seed", reader.require_key("train.seed"));
  if (auto v = reader.take("train.momentum"))
    cfg.train.momentum = reader.as_double("train.momentum", *v);
  if (auto v = reader.take("train.it_threshold"))
    cfg.train.it_threshold = reader.as_double("train.it_threshold", *v);
  if (auto v = reader.take("train.probe_every"))
    cfg.train.probe_every = reader.as_u64("train.probe_every", *v);
  if (cfg.train.epochs == 0) reader.fail("train.epochs", "must be >= 1");
  if (cfg.train.batch_size == 0) reader.fail("train.batch_size", "must be >= 1");
  if (cfg.train.probe_every == 0) reader.fail("train.probe_every", "must be >= 1");
  if (!(cfg.train.it_threshold > 0.0 && cfg.train.it_threshold <= 1.0))
    reader.fail("train.it_threshold", "must lie in (0, 1]");

  // [loss]
  if (auto v = reader.take("loss.mode")) {
    if (*v == "vanilla")
      cfg.train.mode = LossMode::vanilla;
    else if (*v == "svsl")
      cfg.train.mode = LossMode::svsl;
    else
      reader.fail("loss.mode", "expected vanilla or svsl, got '" + *v + "'");
  }
  if (auto v = reader.take("loss.alpha"))
    cfg.train.svsl.alpha = reader.as_double("loss.alpha", *v);
  if (auto v = reader.take("loss.gamma"))
    cfg.train.svsl.gamma = reader.as_u64("loss.gamma", *v);
  if (auto v = reader.take("loss.include_final_layer"))
    cfg.train.svsl.include_final_layer = reader.as_bool("loss.include_final_layer", *v);
  if (auto v = reader.take("loss.tpt_only"))
    cfg.train.svsl.tpt_only = reader.as_bool("loss.tpt_only", *v);
  if (cfg.train.svsl.alpha < 0.0) reader.fail("loss.alpha", "must be >= 0");
  if (cfg.train.svsl.gamma == 0) reader.fail("loss.gamma", "layers are numbered from 1");

  // [output]
  if (auto v = reader.take("output.dir")) cfg.output_dir = *v;

  reader.reject_unconsumed();
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  return parse_config(in, path);
}

// Canonical text form of a parsed config: fixed key order, defaults filled
// in. Written next to the run's outputs so a run can be reproduced from its
// own directory.
inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[dataset]\n";
  switch (cfg.dataset.kind) {
    case DatasetConfig::Kind::gaussian: {
      out << "kind = gaussian\n";
      out << "classes = " << cfg.dataset.classes << "\n";
      out << "dim = " << cfg.dataset.dim << "\n";
      out << "train_per_class = " << cfg.dataset.train_per_class << "\n";
      out << "test_per_class = " << cfg.dataset.test_per_class << "\n";
      out << "sigma = " << format_double(cfg.dataset.sigma) << "\n";
      out << "seed = " << cfg.dataset.seed << "\n";
      if (cfg.dataset.centers_random) {
        out << "centers = random\n";
        out << "center_scale = " << format_double(cfg.dataset.center_scale) << "\n";
        if (cfg.dataset.center_seed) out << "center_seed = " << *cfg.dataset.center_seed << "\n";
      } else {
        out << "centers = ";
        for (std::size_t i = 0; i < cfg.dataset.explicit_centers.size(); ++i) {
          if (i) out << "; ";
          const auto& c = cfg.dataset.explicit_centers[i];
          for (std::size_t j = 0; j < c.size(); ++j) {
            if (j) out << ",";
            out << format_double(c[j]);
          }
        }
        out << "\n";
      }
      break;
    }
    case DatasetConfig::Kind::idx:
      out << "kind = idx\n";
      out << "train_images = " << cfg.dataset.train_images << "\n";
      out << "train_labels = " << cfg.dataset.train_labels << "\n";
      out << "test_images = " << cfg.dataset.test_images << "\n";
      out << "test_labels = " << cfg.dataset.test_labels << "\n";
      break;
    case DatasetConfig::Kind::csv:
      out << "kind = csv\n";
      out << "train_path = " << cfg.dataset.train_path << "\n";
      out << "test_path = " << cfg.dataset.test_path << "\n";
      out << "label_column = " << cfg.dataset.label_column << "\n";
      out << "has_header = " << (cfg.dataset.has_header ? "true" : "false") << "\n";
      break;
  }

  out << "\n[model]\n";
  out << "hidden_widths = ";
  for (std::size_t i = 0; i < cfg.model.hidden_widths.size(); ++i) {
    if (i) out << ",";
    out << cfg.model.hidden_widths[i];
  }
  out << "\n";
  out << "activation = " << to_string(cfg.model.hidden_activation) << "\n";

  out << "\n[train]\n";
  out << "epochs = " << cfg.train.epochs << "\n";
  out << "batch_size = " << cfg.train.batch_size << "\n";
  out << "learning_rate = " << format_double(cfg.train.learning_rate) << "\n";
  out << "momentum = " << format_double(cfg.train.momentum) << "\n";
  out << "seed = " << cfg.train.seed << "\n";
  out << "it_threshold = " << format_double(cfg.train.it_threshold) << "\n";
  out << "probe_every = " << cfg.train.probe_every << "\n";

  out << "\n[loss]\n";
  out << "mode = " << (cfg.train.mode == LossMode::svsl ? "svsl" : "vanilla") << "\n";
  out << "alpha = " << format_double(cfg.train.svsl.alpha) << "\n";
  out << "gamma = " << cfg.train.svsl.gamma << "\n";
  out << "include_final_layer = " << (cfg.train.svsl.include_final_layer ? "true" : "false")
      << "\n";
  out << "tpt_only = " << (cfg.train.svsl.tpt_only ? "true" : "false") << "\n";

  out << "\n[output]\n";
  out << "dir = " << cfg.output_dir << "\n";
  return out.str();
}

// Materialize the configured dataset pair (train, test).
inline std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& cfg) {
  switch (cfg.kind) {
    case DatasetConfig::Kind::gaussian: {
      GaussianMixtureSpec spec;
      spec.classes = cfg.classes;
      spec.dim = cfg.dim;
      spec.sigma = cfg.sigma;
      spec.train_per_class = cfg.train_per_class;
      spec.test_per_class = cfg.test_per_class;
      spec.seed = cfg.seed;
      if (cfg.centers_random) {
        const std::uint64_t center_seed =
            cfg.center_seed ? *cfg.center_seed : derive_seed(cfg.seed, 2);
        spec.centers = random_centers(cfg.classes, cfg.dim, cfg.center_scale, center_seed);
      } else {
        spec.centers = Tensor2D(cfg.classes, cfg.dim);
        for (std::size_t i = 0; i < cfg.classes; ++i)
          std::copy(cfg.explicit_centers[i].begin(), cfg.explicit_centers[i].end(),
                    spec.centers.row(i).begin());
      }
      return generate_gaussian_mixture(spec);
    }
    case DatasetConfig::Kind::idx: {
      Dataset train = read_idx(cfg.train_images, cfg.train_labels);
      Dataset test = read_idx(cfg.test_images, cfg.test_labels);
      train.split = "train";
      test.split = "test";
      test.num_classes = train.num_classes = std::max(train.num_classes, test.num_classes);
      return {std::move(train), std::move(test)};
    }
    case DatasetConfig::Kind::csv: {
      Dataset train = read_csv(cfg.train_path, cfg.label_column, cfg.has_header);
      Dataset test = read_csv(cfg.test_path, cfg.label_column, cfg.has_header);
      train.split = "train";
      test.split = "test";
      test.num_classes = train.num_classes = std::max(train.num_classes, test.num_classes);
      return {std::move(train), std::move(test)};
    }
  }
  throw ContractViolation("load_datasets: unreachable dataset kind");
}

// Layer stack for the configured model: hidden layers with the configured
// activation, then an identity layer of one logit per class.
inline std::vector<LayerSpec> build_layer_specs(const ModelConfig& model,
                                                std::size_t num_classes) {
  std::vector<LayerSpec> specs;
  for (std::size_t w : model.hidden_widths) specs.push_back({w, model.hidden_activation});
  specs.push_back({num_classes, Activation::identity});
  return specs;
}

}  // namespace svsl
