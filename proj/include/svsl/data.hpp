#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "svsl/error.hpp"
#include "svsl/rng.hpp"
#include "svsl/tensor.hpp"

namespace svsl {

struct Dataset {
  Tensor2D features;             // N x d
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string split;             // "train" or "test"

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
};

// Synthetic stand-in for image data at desk scale: isotropic Gaussian blobs,
// one per class.
struct GaussianMixtureSpec {
  std::size_t classes = 0;
  std::size_t dim = 0;
  Tensor2D centers;  // classes x dim
  double sigma = 1.0;
  std::size_t train_per_class = 0;
  std::size_t test_per_class = 0;
  std::uint64_t seed = 0;
};

// Centers drawn N(0, scale^2) per coordinate, from their own seed so the
// class layout is independent of the sampling noise.
inline Tensor2D random_centers(std::size_t classes, std::size_t dim, double scale,
                               std::uint64_t seed) {
  RngState rng(seed);
  Tensor2D centers(classes, dim);
  for (double& v : centers.data()) v = scale * rng.next_gaussian();
  return centers;
}

namespace detail {

inline Dataset sample_mixture(const GaussianMixtureSpec& spec, std::size_t per_class,
                              std::uint64_t seed, const std::string& split) {
  RngState rng(seed);
  Dataset out;
  out.num_classes = spec.classes;
  out.split = split;
  out.features = Tensor2D(spec.classes * per_class, spec.dim);
  out.labels.resize(spec.classes * per_class);
  std::size_t row = 0;
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    for (std::size_t s = 0; s < per_class; ++s, ++row) {
      auto dst = out.features.row(row);
      auto center = spec.centers.row(cls);
      for (std::size_t c = 0; c < spec.dim; ++c)
        dst[c] = center[c] + spec.sigma * rng.next_gaussian();
      out.labels[row] = cls;
    }
  }
  return out;
}

}  // namespace detail

inline std::pair<Dataset, Dataset> generate_gaussian_mixture(const GaussianMixtureSpec& spec) {
  require(spec.classes >= 1 && spec.dim >= 1, "gaussian mixture: need classes and dim >= 1");
  require(spec.sigma > 0.0, "gaussian mixture: sigma must be > 0");
  require(spec.centers.rows() == spec.classes && spec.centers.cols() == spec.dim,
          "gaussian mixture: centers must be " + std::to_string(spec.classes) + "x" +
              std::to_string(spec.dim) + ", got " + spec.centers.shape_str());
  require(spec.train_per_class >= 1, "gaussian mixture: train_per_class must be >= 1");
  for (std::size_t a = 0; a < spec.classes; ++a)
    for (std::size_t b = a + 1; b < spec.classes; ++b)
      if (spec.centers.row(a).size() == spec.centers.row(b).size() &&
          std::equal(spec.centers.row(a).begin(), spec.centers.row(a).end(),
                     spec.centers.row(b).begin())) {
        std::cerr << "warning: gaussian mixture classes " << a << " and " << b
                  << " share a center; they will overlap completely\n";
      }

  Dataset train = detail::sample_mixture(spec, spec.train_per_class,
                                         derive_seed(spec.seed, 0), "train");
  Dataset test = detail::sample_mixture(spec, spec.test_per_class,
                                        derive_seed(spec.seed, 1), "test");
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// IDX (the MNIST container format): big-endian u32 header fields, then raw
// unsigned bytes. Images use magic 0x00000803 with dims [N, rows, cols];
// labels use magic 0x00000801 with dim [N]. Pixels are scaled to [0, 1].

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& path,
                                 std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path + ": truncated at byte offset " + std::to_string(offset));
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

inline Dataset read_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw ParseError(images_path + ": cannot open");
  const std::uint32_t image_magic = detail::read_u32_be(images, images_path, 0);
  if (image_magic != 0x00000803u) {
    std::ostringstream msg;
    msg << images_path << ": bad image magic 0x" << std::hex << image_magic
        << " at byte offset 0 (expected 0x803)";
    throw ParseError(msg.str());
  }
  const std::uint32_t count = detail::read_u32_be(images, images_path, 4);
  const std::uint32_t img_rows = detail::read_u32_be(images, images_path, 8);
  const std::uint32_t img_cols = detail::read_u32_be(images, images_path, 12);

  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw ParseError(labels_path + ": cannot open");
  const std::uint32_t label_magic = detail::read_u32_be(labels, labels_path, 0);
  if (label_magic != 0x00000801u) {
    std::ostringstream msg;
    msg << labels_path << ": bad label magic 0x" << std::hex << label_magic
        << " at byte offset 0 (expected 0x801)";
    throw ParseError(msg.str());
  }
  const std::uint32_t label_count = detail::read_u32_be(labels, labels_path, 4);
  if (label_count != count)
    throw ParseError(labels_path + ": " + std::to_string(label_count) + " labels for " +
                     std::to_string(count) + " images in " + images_path);

  const std::size_t dim = static_cast<std::size_t>(img_rows) * img_cols;
  Dataset out;
  out.features = Tensor2D(count, dim);
  out.labels.resize(count);

  std::vector<unsigned char> pixel_buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!images.read(reinterpret_cast<char*>(pixel_buf.data()),
                     static_cast<std::streamsize>(dim)))
      throw ParseError(images_path + ": truncated at byte offset " +
                       std::to_string(16 + static_cast<std::size_t>(i) * dim));
    auto dst = out.features.row(i);
    for (std::size_t c = 0; c < dim; ++c) dst[c] = pixel_buf[c] / 255.0;
  }
  std::vector<unsigned char> label_buf(count);
  if (!labels.read(reinterpret_cast<char*>(label_buf.data()),
                   static_cast<std::streamsize>(count)))
    throw ParseError(labels_path + ": truncated label data after byte offset 8");
  std::size_t max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    out.labels[i] = label_buf[i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = count > 0 ? max_label + 1 : 0;
  return out;
}

inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      std::uint32_t img_rows, std::uint32_t img_cols,
                      const std::vector<unsigned char>& pixels,
                      const std::vector<unsigned char>& labels) {
  const std::size_t dim = static_cast<std::size_t>(img_rows) * img_cols;
  require(dim > 0 && pixels.size() % dim == 0, "write_idx: pixel count not a multiple of image size");
  const std::size_t count = pixels.size() / dim;
  require(labels.size() == count, "write_idx: label count != image count");

  std::ofstream images(images_path, std::ios::binary);
  if (!images) throw ParseError(images_path + ": cannot open for writing");
  detail::write_u32_be(images, 0x00000803u);
  detail::write_u32_be(images, static_cast<std::uint32_t>(count));
  detail::write_u32_be(images, img_rows);
  detail::write_u32_be(images, img_cols);
  images.write(reinterpret_cast<const char*>(pixels.data()),
               static_cast<std::streamsize>(pixels.size()));

  std::ofstream label_file(labels_path, std::ios::binary);
  if (!label_file) throw ParseError(labels_path + ": cannot open for writing");
  detail::write_u32_be(label_file, 0x00000801u);
  detail::write_u32_be(label_file, static_cast<std::uint32_t>(count));
  label_file.write(reinterpret_cast<const char*>(labels.data()),
                   static_cast<std::streamsize>(labels.size()));
}

// ---------------------------------------------------------------------------
// CSV: rectangular numeric table, one integer label column, every other
// column a feature in file order.

inline Dataset read_csv(const std::string& path, std::size_t label_column,
                        bool has_header = false) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");

  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && has_header) continue;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        cells.push_back(v);
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": non-numeric cell '" + cell + "'");
      }
    }
    if (width == 0) {
      width = cells.size();
      if (width < 2)
        throw ParseError(path + ": line " + std::to_string(line_no) +
                         ": need at least one feature column and one label column");
      if (label_column >= width)
        throw ParseError(path + ": label column " + std::to_string(label_column) +
                         " out of range for " + std::to_string(width) + " columns");
    } else if (cells.size() != width) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": ragged row with " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(width));
    }
    const double raw_label = cells[label_column];
    if (raw_label < 0 || raw_label != std::floor(raw_label))
      throw ParseError(path + ": line " + std::to_string(line_no) +
                       ": label must be a non-negative integer, got " + std::to_string(raw_label));
    labels.push_back(static_cast<std::size_t>(raw_label));
    cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(label_column));
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");

  std::size_t max_label = 0;
  for (std::size_t l : labels) max_label = std::max(max_label, l);
  const std::size_t num_classes = max_label + 1;
  if (num_classes < 2)
    throw ParseError(path + ": only one class present; classification needs at least 2");
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t l : labels) ++counts[l];
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] == 0)
      throw ParseError(path + ": label values have a gap: class " + std::to_string(c) +
                       " never appears but class " + std::to_string(max_label) + " does");

  Dataset out;
  out.features = Tensor2D(rows.size(), width - 1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), out.features.row(i).begin());
  out.labels = std::move(labels);
  out.num_classes = num_classes;
  return out;
}

// ---------------------------------------------------------------------------

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std; constant features pinned to 1
};

// Mean-std normalization with statistics taken from the train split only and
// applied to every split. A constant feature would divide by zero, so its
// std is pinned to 1 and the feature comes out all zeros.
inline FeatureStats normalize_mean_std(Dataset& train, std::vector<Dataset*> others = {}) {
  require(train.size() >= 1, "normalize_mean_std: empty train split");
  const std::size_t dim = train.dim();
  FeatureStats stats;
  stats.mean.assign(dim, 0.0);
  stats.stddev.assign(dim, 0.0);

  const double inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto row = train.features.row(i);
    for (std::size_t c = 0; c < dim; ++c) stats.mean[c] += row[c];
  }
  for (double& m : stats.mean) m *= inv_n;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto row = train.features.row(i);
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = row[c] - stats.mean[c];
      stats.stddev[c] += d * d;
    }
  }
  for (double& s : stats.stddev) s = std::sqrt(s * inv_n);
  for (double& s : stats.stddev)
    if (s == 0.0) s = 1.0;

  auto apply = [&](Dataset& ds) {
    require(ds.dim() == dim, "normalize_mean_std: split has " + std::to_string(ds.dim()) +
                                 " features, train has " + std::to_string(dim));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto row = ds.features.row(i);
      for (std::size_t c = 0; c < dim; ++c) row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
    }
  };
  apply(train);
  for (Dataset* ds : others) apply(*ds);
  return stats;
}

}  // namespace svsl
