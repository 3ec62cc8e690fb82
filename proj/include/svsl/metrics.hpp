#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svsl/data.hpp"
#include "svsl/error.hpp"
#include "svsl/model.hpp"
#include "svsl/tensor.hpp"

namespace svsl {

namespace detail {

constexpr std::size_t kEvalChunk = 512;

inline Tensor2D slice_rows(const Tensor2D& t, std::size_t start, std::size_t count) {
  Tensor2D out(count, t.cols());
  std::copy(t.data().begin() + static_cast<std::ptrdiff_t>(start * t.cols()),
            t.data().begin() + static_cast<std::ptrdiff_t>((start + count) * t.cols()),
            out.data().begin());
  return out;
}

// Compensated (Kahan) accumulator laid over a tensor, so streaming means do
// not drift on large splits.
struct KahanTensor {
  Tensor2D sum;
  Tensor2D compensation;

  KahanTensor(std::size_t rows, std::size_t cols) : sum(rows, cols), compensation(rows, cols) {}

  void add_row(std::size_t row, std::span<const double> values) {
    double* s = sum.row(row).data();
    double* c = compensation.row(row).data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double y = values[i] - c[i];
      const double t = s[i] + y;
      c[i] = (t - s[i]) - y;
      s[i] = t;
    }
  }
};

struct KahanScalar {
  double sum = 0.0;
  double compensation = 0.0;

  void add(double value) {
    const double y = value - compensation;
    const double t = sum + y;
    compensation = (t - sum) - y;
    sum = t;
  }
};

}  // namespace detail

// Train class means mu_c^(j) for every layer j = 1..k, streamed over the
// split in sample order.
struct ClassMeans {
  std::vector<Tensor2D> per_layer;   // [k], each num_classes x n_j
  std::vector<std::size_t> counts;   // per class
  std::size_t num_classes = 0;

  std::size_t layer_count() const { return per_layer.size(); }
  const Tensor2D& layer(std::size_t j) const { return per_layer[j - 1]; }
};

inline ClassMeans compute_class_means(const NetworkParams& params, const Dataset& train) {
  require(train.size() >= 1, "compute_class_means: empty split");
  const std::size_t k = params.layer_count();
  const std::size_t num_classes = train.num_classes;

  std::vector<detail::KahanTensor> sums;
  for (std::size_t j = 0; j < k; ++j)
    sums.emplace_back(num_classes, params.layers[j].output_width);
  std::vector<std::size_t> counts(num_classes, 0);

  for (std::size_t start = 0; start < train.size(); start += detail::kEvalChunk) {
    const std::size_t count = std::min(detail::kEvalChunk, train.size() - start);
    const ForwardTrace trace =
        forward_with_trace(params, detail::slice_rows(train.features, start, count));
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t cls = train.labels[start + i];
      ++counts[cls];
      for (std::size_t j = 0; j < k; ++j)
        sums[j].add_row(cls, trace.activations[j].row(i));
    }
  }

  for (std::size_t cls = 0; cls < num_classes; ++cls)
    if (counts[cls] == 0)
      throw ContractViolation("compute_class_means: class " + std::to_string(cls) +
                              " has no samples; its mean is undefined");

  ClassMeans means;
  means.num_classes = num_classes;
  means.counts = counts;
  for (std::size_t j = 0; j < k; ++j) {
    Tensor2D layer_mean = std::move(sums[j].sum);
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
      const double inv = 1.0 / static_cast<double>(counts[cls]);
      for (double& v : layer_mean.row(cls)) v *= inv;
    }
    means.per_layer.push_back(std::move(layer_mean));
  }
  return means;
}

// Scalar within-class variability per layer: the trace of the class-averaged
// covariance of activations about their class means,
//   v_j = (1/C) sum_c Avg_{i in c} |g_i^(j) - mu_c^(j)|^2.
inline std::vector<double> within_class_variability(const NetworkParams& params,
                                                    const Dataset& train,
                                                    const ClassMeans& means) {
  require(means.layer_count() == params.layer_count(),
          "within_class_variability: means cover " + std::to_string(means.layer_count()) +
              " layers, network has " + std::to_string(params.layer_count()));
  require(means.num_classes == train.num_classes,
          "within_class_variability: means were computed for a different class count");
  const std::size_t k = params.layer_count();
  const std::size_t num_classes = train.num_classes;

  std::vector<std::vector<detail::KahanScalar>> sq_sums(
      k, std::vector<detail::KahanScalar>(num_classes));
  std::vector<std::size_t> counts(num_classes, 0);

  for (std::size_t start = 0; start < train.size(); start += detail::kEvalChunk) {
    const std::size_t count = std::min(detail::kEvalChunk, train.size() - start);
    const ForwardTrace trace =
        forward_with_trace(params, detail::slice_rows(train.features, start, count));
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t cls = train.labels[start + i];
      ++counts[cls];
      for (std::size_t j = 0; j < k; ++j)
        sq_sums[j][cls].add(
            sq_euclidean(trace.activations[j].row(i), means.per_layer[j].row(cls)));
    }
  }

  std::vector<double> variability(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double total = 0.0;
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
      require(counts[cls] >= 1, "within_class_variability: class " + std::to_string(cls) +
                                    " has no samples in this split");
      total += sq_sums[j][cls].sum / static_cast<double>(counts[cls]);
    }
    variability[j] = total / static_cast<double>(num_classes);
  }
  return variability;
}

// Nearest class-center decision at one layer: the class whose train mean is
// closest in Euclidean distance, lowest index on ties.
inline std::size_t ncc_predict(std::span<const double> activation,
                               const Tensor2D& layer_means) {
  require(activation.size() == layer_means.cols(),
          "ncc_predict: activation width " + std::to_string(activation.size()) +
              " != mean width " + std::to_string(layer_means.cols()));
  require(layer_means.rows() >= 1, "ncc_predict: no class means");
  std::size_t best = 0;
  double best_dist = sq_euclidean(activation, layer_means.row(0));
  for (std::size_t cls = 1; cls < layer_means.rows(); ++cls) {
    const double dist = sq_euclidean(activation, layer_means.row(cls));
    if (dist < best_dist) {
      best = cls;
      best_dist = dist;
    }
  }
  return best;
}

// Per-layer NCC mismatch: the fraction of samples where the network's argmax
// disagrees with the nearest-class-center decision at layer j. The means are
// always train means, for the test split too.
struct MismatchReport {
  std::vector<double> lambda;  // [k]
  std::size_t sample_count = 0;
};

inline MismatchReport ncc_mismatch(const NetworkParams& params, const Dataset& dataset,
                                   const ClassMeans& means) {
  require(dataset.size() >= 1, "ncc_mismatch: empty split");
  require(means.layer_count() == params.layer_count(),
          "ncc_mismatch: means do not match the network's layer count");
  const std::size_t k = params.layer_count();

  std::vector<std::size_t> disagreements(k, 0);
  for (std::size_t start = 0; start < dataset.size(); start += detail::kEvalChunk) {
    const std::size_t count = std::min(detail::kEvalChunk, dataset.size() - start);
    const ForwardTrace trace =
        forward_with_trace(params, detail::slice_rows(dataset.features, start, count));
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t net_choice = argmax_row(trace.logits().row(i));
      for (std::size_t j = 0; j < k; ++j)
        if (ncc_predict(trace.activations[j].row(i), means.per_layer[j]) != net_choice)
          ++disagreements[j];
    }
  }

  MismatchReport report;
  report.sample_count = dataset.size();
  report.lambda.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    report.lambda[j] =
        static_cast<double>(disagreements[j]) / static_cast<double>(dataset.size());
  return report;
}

// Train NCC mismatch at the penultimate layer, the quantity whose decay
// witnesses simplification-to-NCC.
inline double nc4_gap(const NetworkParams& params, const Dataset& train,
                      const ClassMeans& means) {
  require(params.layer_count() >= 2, "nc4_gap: need at least 2 layers");
  return ncc_mismatch(params, train, means).lambda[params.layer_count() - 2];
}

inline double dataset_accuracy(const NetworkParams& params, const Dataset& dataset) {
  require(dataset.size() >= 1, "dataset_accuracy: empty split");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < dataset.size(); start += detail::kEvalChunk) {
    const std::size_t count = std::min(detail::kEvalChunk, dataset.size() - start);
    const Tensor2D logits = forward_to_layer(
        params, detail::slice_rows(dataset.features, start, count), params.layer_count());
    for (std::size_t i = 0; i < count; ++i)
      if (argmax_row(logits.row(i)) == dataset.labels[start + i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

// Classify by nearest class-center at an intermediate layer, truncating the
// forward pass there. agreement is reported as 1 - mismatch fraction, so it
// matches the layer's NCC mismatch identity exactly.
struct EarlyExitResult {
  double ncc_accuracy = 0.0;
  double agreement_with_classifier = 0.0;
};

inline EarlyExitResult early_exit_eval(const NetworkParams& params, const Dataset& dataset,
                                       const ClassMeans& means, std::size_t exit_layer) {
  const std::size_t k = params.layer_count();
  require(exit_layer >= 1 && exit_layer <= k,
          "early_exit_eval: layer " + std::to_string(exit_layer) + " out of 1.." +
              std::to_string(k));
  require(dataset.size() >= 1, "early_exit_eval: empty split");

  std::size_t correct = 0;
  std::size_t disagreements = 0;
  for (std::size_t start = 0; start < dataset.size(); start += detail::kEvalChunk) {
    const std::size_t count = std::min(detail::kEvalChunk, dataset.size() - start);
    const Tensor2D chunk = detail::slice_rows(dataset.features, start, count);
    Tensor2D acts = forward_to_layer(params, chunk, exit_layer);
    // Continue the same pass to logits for the agreement comparison.
    Tensor2D logits = acts;
    for (std::size_t j = exit_layer; j < k; ++j) logits = apply_layer(params, j, logits);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t ncc_choice = ncc_predict(acts.row(i), means.per_layer[exit_layer - 1]);
      if (ncc_choice == dataset.labels[start + i]) ++correct;
      if (ncc_choice != argmax_row(logits.row(i))) ++disagreements;
    }
  }

  EarlyExitResult result;
  result.ncc_accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  result.agreement_with_classifier =
      1.0 - static_cast<double>(disagreements) / static_cast<double>(dataset.size());
  return result;
}

// Layer-ordering predicate: lambda[j] >= lambda[j+1] - slack for every
// adjacent pair of probed layers.
inline bool check_layer_ordering(std::span<const double> lambda, double slack) {
  require(lambda.size() >= 2, "check_layer_ordering: need at least 2 probed layers");
  for (std::size_t j = 0; j + 1 < lambda.size(); ++j)
    if (lambda[j] < lambda[j + 1] - slack) return false;
  return true;
}

// Multiply-accumulate cost of a forward pass truncated at exit_layer,
// as a fraction of the full pass (weights only; bias adds excluded).
inline double forward_cost_fraction(const std::vector<std::size_t>& widths,
                                    std::size_t exit_layer) {
  require(widths.size() >= 2, "forward_cost_fraction: need at least one layer");
  require(exit_layer >= 1 && exit_layer < widths.size(),
          "forward_cost_fraction: layer " + std::to_string(exit_layer) + " out of 1.." +
              std::to_string(widths.size() - 1));
  double partial = 0.0;
  double total = 0.0;
  for (std::size_t j = 1; j < widths.size(); ++j) {
    const double macs = static_cast<double>(widths[j - 1]) * static_cast<double>(widths[j]);
    total += macs;
    if (j <= exit_layer) partial += macs;
  }
  return partial / total;
}

}  // namespace svsl
