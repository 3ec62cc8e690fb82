#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "svsl/data.hpp"
#include "svsl/error.hpp"
#include "svsl/loss.hpp"
#include "svsl/metrics.hpp"
#include "svsl/model.hpp"
#include "svsl/rng.hpp"

namespace svsl {

enum class LossMode { vanilla, svsl };

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  LossMode mode = LossMode::vanilla;
  SvslConfig svsl;
  double it_threshold = 0.995;
  std::size_t probe_every = 1;
};

// One probed epoch. ce_loss/svsl_loss are sample-weighted means over the
// epoch's training batches; lambda_* and variability cover layers 1..k.
struct EpochRecord {
  std::size_t epoch = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double ce_loss = 0.0;
  double svsl_loss = 0.0;
  std::vector<double> lambda_train;
  std::vector<double> lambda_test;
  std::vector<double> variability;
  bool in_tpt = false;
};

struct RunResult {
  std::vector<EpochRecord> records;
  std::optional<std::size_t> it_epoch;
  std::size_t eot_epoch = 0;
  NetworkParams final_params;
  std::optional<NetworkParams> it_params;
};

// Latches on the first epoch whose train accuracy reaches the threshold and
// never resets, even if accuracy later dips below it.
class InterpolationLatch {
 public:
  explicit InterpolationLatch(double threshold) : threshold_(threshold) {}

  // Returns true exactly on the first crossing.
  bool observe(std::size_t epoch, double train_accuracy) {
    if (it_epoch_) return false;
    if (train_accuracy >= threshold_) {
      it_epoch_ = epoch;
      return true;
    }
    return false;
  }

  bool in_tpt() const { return it_epoch_.has_value(); }
  std::optional<std::size_t> it_epoch() const { return it_epoch_; }

 private:
  double threshold_;
  std::optional<std::size_t> it_epoch_;
};

namespace detail {

inline Tensor2D gather_rows(const Tensor2D& source, std::span<const std::size_t> indices) {
  Tensor2D out(indices.size(), source.cols());
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy(source.row(indices[i]).begin(), source.row(indices[i]).end(),
              out.row(i).begin());
  return out;
}

}  // namespace detail

// Seeded minibatch SGD with momentum. Everything random (init, per-epoch
// shuffles) derives from config.seed, so a rerun reproduces the result
// bit for bit. Vanilla mode runs the identical code path with the penalty
// weight forced to zero. Metric probes run every probe_every epochs; the
// interpolation epoch and the final epoch are always probed.
inline RunResult run_experiment(const TrainConfig& config, std::size_t input_dim,
                                const std::vector<LayerSpec>& specs,
                                const Dataset& train, const Dataset& test) {
  require(config.epochs >= 1, "run_experiment: epochs must be >= 1");
  require(config.batch_size >= 1, "run_experiment: batch_size must be >= 1");
  require(config.probe_every >= 1, "run_experiment: probe_every must be >= 1");
  require(config.it_threshold > 0.0 && config.it_threshold <= 1.0,
          "run_experiment: it_threshold must lie in (0, 1]");
  require(!specs.empty(), "run_experiment: model has no layers");
  require(specs.back().output_width == train.num_classes,
          "run_experiment: final layer width " + std::to_string(specs.back().output_width) +
              " != class count " + std::to_string(train.num_classes));
  require(train.dim() == input_dim && test.dim() == input_dim,
          "run_experiment: dataset feature width does not match input_dim");
  {
    std::vector<std::size_t> counts(train.num_classes, 0);
    for (std::size_t label : train.labels) ++counts[label];
    for (std::size_t cls = 0; cls < counts.size(); ++cls)
      require(counts[cls] >= 1, "run_experiment: class " + std::to_string(cls) +
                                    " has no train samples");
  }

  SvslConfig effective = config.svsl;
  if (config.mode == LossMode::vanilla) effective = SvslConfig{};
  if (effective.alpha != 0.0) {
    const std::size_t k = specs.size();
    const std::size_t last = effective.include_final_layer ? k : k - 1;
    require(effective.gamma >= 1 && effective.gamma < k && effective.gamma <= last,
            "run_experiment: svsl gamma " + std::to_string(effective.gamma) +
                " invalid for a " + std::to_string(k) + "-layer network");
  }

  RngState init_rng(derive_seed(config.seed, 0));
  RngState shuffle_rng(derive_seed(config.seed, 1));
  NetworkParams params = init_network(input_dim, specs, init_rng);

  std::vector<Tensor2D> velocity_w;
  std::vector<Tensor2D> velocity_b;
  for (std::size_t j = 0; j < params.layer_count(); ++j) {
    velocity_w.emplace_back(params.weights[j].rows(), params.weights[j].cols());
    velocity_b.emplace_back(1, params.biases[j].cols());
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  InterpolationLatch latch(config.it_threshold);
  RunResult result;
  result.eot_epoch = config.epochs - 1;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order, shuffle_rng);

    double ce_sum = 0.0;
    double svsl_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < train.size();
         start += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, train.size() - start);
      const std::span<const std::size_t> batch_ids(order.data() + start, count);
      const Tensor2D batch_x = detail::gather_rows(train.features, batch_ids);
      std::vector<std::size_t> batch_y(count);
      for (std::size_t i = 0; i < count; ++i) batch_y[i] = train.labels[batch_ids[i]];

      const ForwardTrace trace = forward_with_trace(params, batch_x);
      const LossBreakdown loss = total_loss(trace, batch_y, effective, latch.in_tpt());
      if (!std::isfinite(loss.total))
        throw TrainingAbort("loss became non-finite at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      ce_sum += loss.ce * static_cast<double>(count);
      svsl_sum += loss.svsl * static_cast<double>(count);

      const ParamGrads grads = backward(params, trace, loss.logit_grad, loss.adjoints);
      for (std::size_t j = 0; j < params.layer_count(); ++j) {
        for (std::size_t i = 0; i < velocity_w[j].size(); ++i) {
          double& v = velocity_w[j].data()[i];
          v = config.momentum * v + grads.weights[j].data()[i];
          params.weights[j].data()[i] -= config.learning_rate * v;
        }
        for (std::size_t i = 0; i < velocity_b[j].size(); ++i) {
          double& v = velocity_b[j].data()[i];
          v = config.momentum * v + grads.biases[j].data()[i];
          params.biases[j].data()[i] -= config.learning_rate * v;
        }
      }
    }

    const double train_accuracy = dataset_accuracy(params, train);
    const double test_accuracy = dataset_accuracy(params, test);
    const bool just_latched = latch.observe(epoch, train_accuracy);
    if (just_latched) result.it_params = params;

    const bool probe = epoch % config.probe_every == 0 || just_latched ||
                       epoch == config.epochs - 1;
    if (probe) {
      const ClassMeans means = compute_class_means(params, train);
      EpochRecord record;
      record.epoch = epoch;
      record.train_accuracy = train_accuracy;
      record.test_accuracy = test_accuracy;
      record.ce_loss = ce_sum / static_cast<double>(train.size());
      record.svsl_loss = svsl_sum / static_cast<double>(train.size());
      record.lambda_train = ncc_mismatch(params, train, means).lambda;
      record.lambda_test = ncc_mismatch(params, test, means).lambda;
      record.variability = within_class_variability(params, train, means);
      record.in_tpt = latch.in_tpt();
      result.records.push_back(std::move(record));
    }
  }

  result.it_epoch = latch.it_epoch();
  result.final_params = std::move(params);
  return result;
}

struct OrderingCheck {
  bool train_ok = false;
  bool test_ok = false;
};

inline OrderingCheck check_layer_ordering(const EpochRecord& record, double slack) {
  return {check_layer_ordering(record.lambda_train, slack),
          check_layer_ordering(record.lambda_test, slack)};
}

// Per-layer comparison of the mismatch at the interpolation epoch against
// the final epoch. A run that never interpolated yields it_reached = false
// rather than a failure.
struct ItToEotCheck {
  bool it_reached = false;
  std::vector<bool> train_ok;
  std::vector<bool> test_ok;

  bool all_ok() const {
    if (!it_reached) return false;
    for (bool b : train_ok)
      if (!b) return false;
    for (bool b : test_ok)
      if (!b) return false;
    return true;
  }
};

// Everything compare needs from a run; buildable from a live RunResult or
// from a run directory's persisted metrics.
struct RunView {
  std::vector<EpochRecord> records;
  std::optional<std::size_t> it_epoch;
  std::size_t eot_epoch = 0;
};

inline RunView to_view(const RunResult& result) {
  return {result.records, result.it_epoch, result.eot_epoch};
}

namespace detail {

inline const EpochRecord& record_at_epoch(const RunView& view, std::size_t epoch,
                                          const char* what) {
  for (const auto& r : view.records)
    if (r.epoch == epoch) return r;
  throw ContractViolation(std::string("no probe record at ") + what + " epoch " +
                          std::to_string(epoch));
}

}  // namespace detail

inline ItToEotCheck check_it_to_eot(const RunView& view, double slack) {
  ItToEotCheck check;
  if (!view.it_epoch) return check;
  check.it_reached = true;
  const EpochRecord& at_it = detail::record_at_epoch(view, *view.it_epoch, "IT");
  const EpochRecord& at_eot = detail::record_at_epoch(view, view.eot_epoch, "EOT");
  const std::size_t k = at_it.lambda_train.size();
  for (std::size_t j = 0; j < k; ++j) {
    check.train_ok.push_back(at_it.lambda_train[j] >= at_eot.lambda_train[j] - slack);
    check.test_ok.push_back(at_it.lambda_test[j] >= at_eot.lambda_test[j] - slack);
  }
  return check;
}

inline ItToEotCheck check_it_to_eot(const RunResult& result, double slack) {
  return check_it_to_eot(to_view(result), slack);
}

struct BestTestEpoch {
  std::size_t epoch = 0;
  double accuracy = 0.0;
  bool in_tpt = false;
};

// Earliest probed epoch attaining the maximum test accuracy.
inline BestTestEpoch best_test_epoch(const RunView& view) {
  require(!view.records.empty(), "best_test_epoch: run has no records");
  const EpochRecord* best = &view.records.front();
  for (const auto& r : view.records)
    if (r.test_accuracy > best->test_accuracy) best = &r;
  return {best->epoch, best->test_accuracy, best->in_tpt};
}

// Side-by-side summary of two runs over the same task; deltas are a minus b
// throughout (pass the baseline as a).
struct RunComparison {
  std::vector<double> lambda_train_eot_delta;
  std::vector<double> lambda_test_eot_delta;
  double mean_intermediate_test_delta = 0.0;  // layers 1..k-1
  double eot_test_accuracy_a = 0.0;
  double eot_test_accuracy_b = 0.0;
  BestTestEpoch best_a;
  BestTestEpoch best_b;
  std::optional<std::size_t> it_epoch_a;
  std::optional<std::size_t> it_epoch_b;
};

inline RunComparison compare_views(const RunView& a, const RunView& b) {
  const EpochRecord& eot_a = detail::record_at_epoch(a, a.eot_epoch, "EOT");
  const EpochRecord& eot_b = detail::record_at_epoch(b, b.eot_epoch, "EOT");
  require(eot_a.lambda_train.size() == eot_b.lambda_train.size(),
          "compare: runs probe different layer sets (" +
              std::to_string(eot_a.lambda_train.size()) + " vs " +
              std::to_string(eot_b.lambda_train.size()) + ")");

  RunComparison cmp;
  const std::size_t k = eot_a.lambda_train.size();
  for (std::size_t j = 0; j < k; ++j) {
    cmp.lambda_train_eot_delta.push_back(eot_a.lambda_train[j] - eot_b.lambda_train[j]);
    cmp.lambda_test_eot_delta.push_back(eot_a.lambda_test[j] - eot_b.lambda_test[j]);
  }
  if (k >= 2) {
    double sum = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) sum += cmp.lambda_test_eot_delta[j];
    cmp.mean_intermediate_test_delta = sum / static_cast<double>(k - 1);
  }
  cmp.eot_test_accuracy_a = eot_a.test_accuracy;
  cmp.eot_test_accuracy_b = eot_b.test_accuracy;
  cmp.best_a = best_test_epoch(a);
  cmp.best_b = best_test_epoch(b);
  cmp.it_epoch_a = a.it_epoch;
  cmp.it_epoch_b = b.it_epoch;
  return cmp;
}

inline RunComparison compare_runs(const RunResult& a, const RunResult& b) {
  return compare_views(to_view(a), to_view(b));
}

}  // namespace svsl
