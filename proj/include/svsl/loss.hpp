#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "svsl/error.hpp"
#include "svsl/model.hpp"
#include "svsl/tensor.hpp"

namespace svsl {

// Settings for the stochastic variability-simplification penalty: alpha
// scales it, gamma is the first layer it covers, and the covered range runs
// up to the final layer (or one short of it when include_final_layer is
// false). tpt_only delays the penalty until the run has interpolated the
// train set.
struct SvslConfig {
  double alpha = 0.0;
  std::size_t gamma = 1;
  bool include_final_layer = true;
  bool tpt_only = false;
};

struct CrossEntropyResult {
  double loss = 0.0;
  Tensor2D logit_grad;
};

// Mean over the batch of -log_softmax(logits)[label]. The gradient is
// (softmax - one_hot) / B.
inline CrossEntropyResult cross_entropy(const Tensor2D& logits,
                                        const std::vector<std::size_t>& labels) {
  require(logits.rows() == labels.size(),
          "cross_entropy: " + std::to_string(logits.rows()) + " logit rows vs " +
              std::to_string(labels.size()) + " labels");
  require(logits.rows() >= 1, "cross_entropy: empty batch");
  const std::size_t num_classes = logits.cols();
  for (std::size_t label : labels)
    require(label < num_classes, "cross_entropy: label " + std::to_string(label) +
                                     " out of [0, " + std::to_string(num_classes) + ")");

  const Tensor2D log_probs = log_softmax_rows(logits);
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  CrossEntropyResult result;
  result.logit_grad = Tensor2D(logits.rows(), logits.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    loss -= log_probs(i, labels[i]);
    for (std::size_t c = 0; c < num_classes; ++c)
      result.logit_grad(i, c) = std::exp(log_probs(i, c)) * inv_batch;
    result.logit_grad(i, labels[i]) -= inv_batch;
  }
  result.loss = loss * inv_batch;
  return result;
}

// Per-sample penalty weight: alpha / (C * (last_layer + 1 - gamma) * n_c),
// where n_c counts the sample's class inside the batch and the middle factor
// counts the penalized layers gamma..last_layer.
inline double eta(double alpha, std::size_t num_classes, std::size_t last_layer,
                  std::size_t gamma, std::size_t class_count_in_batch) {
  require(class_count_in_batch >= 1, "eta: zero in-batch class count");
  require(gamma >= 1 && gamma <= last_layer,
          "eta: gamma " + std::to_string(gamma) + " outside 1.." +
              std::to_string(last_layer));
  const double denom = static_cast<double>(num_classes) *
                       static_cast<double>(last_layer + 1 - gamma) *
                       static_cast<double>(class_count_in_batch);
  return alpha / denom;
}

// Per-class mean activations over one batch, for the penalized layer range.
// means[j - gamma] is C x n_j; rows of classes absent from the batch stay
// zero and their counts stay zero.
struct BatchClassMeans {
  std::size_t gamma = 1;
  std::size_t last_layer = 0;
  std::vector<Tensor2D> means;
  std::vector<std::size_t> counts;

  const Tensor2D& layer(std::size_t j) const { return means[j - gamma]; }
};

inline BatchClassMeans batch_class_means(const ForwardTrace& trace,
                                         const std::vector<std::size_t>& labels,
                                         std::size_t num_classes, std::size_t gamma,
                                         std::size_t last_layer) {
  BatchClassMeans out;
  out.gamma = gamma;
  out.last_layer = last_layer;
  out.counts.assign(num_classes, 0);
  for (std::size_t label : labels) ++out.counts[label];

  for (std::size_t j = gamma; j <= last_layer; ++j) {
    const Tensor2D& acts = trace.layer(j);
    Tensor2D mean(num_classes, acts.cols());
    for (std::size_t i = 0; i < acts.rows(); ++i) {
      auto src = acts.row(i);
      auto dst = mean.row(labels[i]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    for (std::size_t cls = 0; cls < num_classes; ++cls) {
      if (out.counts[cls] == 0) continue;
      const double inv = 1.0 / static_cast<double>(out.counts[cls]);
      for (double& v : mean.row(cls)) v *= inv;
    }
    out.means.push_back(std::move(mean));
  }
  return out;
}

struct SvslPenalty {
  double penalty = 0.0;
  LayerAdjoints adjoints;  // empty when the penalty is inactive
};

// Mean over the batch of eta(c_i) * sum_{j=gamma..J} |G_j[i] - mu_{c_i,B}|^2,
// J being the last covered layer. The adjoint of sample i at layer j is
// (2 eta(c_i) / B) (G_j[i] - mu_{c_i,B}); treating the batch means as
// constants here still yields the exact gradient of the full batch loss,
// because the within-class deviations sum to zero (verified against finite
// differences in the tests).
inline SvslPenalty svsl_penalty(const ForwardTrace& trace,
                                const std::vector<std::size_t>& labels,
                                const SvslConfig& config, bool in_tpt = true) {
  require(!trace.activations.empty(), "svsl_penalty: empty trace");
  require(trace.logits().rows() == labels.size(),
          "svsl_penalty: batch size mismatch");
  require(labels.size() >= 1, "svsl_penalty: empty batch");

  SvslPenalty result;
  if (config.alpha == 0.0) return result;
  if (config.tpt_only && !in_tpt) return result;

  const std::size_t k = trace.activations.size();
  const std::size_t last_layer = config.include_final_layer ? k : k - 1;
  require(config.gamma >= 1 && config.gamma <= last_layer && last_layer >= 1,
          "svsl_penalty: layer range " + std::to_string(config.gamma) + ".." +
              std::to_string(last_layer) + " is empty");

  const std::size_t num_classes = trace.logits().cols();
  const auto means = batch_class_means(trace, labels, num_classes, config.gamma, last_layer);

  const std::size_t batch = labels.size();
  std::vector<double> weight(batch);
  for (std::size_t i = 0; i < batch; ++i)
    weight[i] = eta(config.alpha, num_classes, last_layer, config.gamma,
                    means.counts[labels[i]]);

  result.adjoints.assign(k, std::nullopt);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  double penalty = 0.0;
  for (std::size_t j = config.gamma; j <= last_layer; ++j) {
    const Tensor2D& acts = trace.layer(j);
    const Tensor2D& mu = means.layer(j);
    Tensor2D adjoint(acts.rows(), acts.cols());
    for (std::size_t i = 0; i < batch; ++i) {
      auto a = acts.row(i);
      auto m = mu.row(labels[i]);
      auto adj = adjoint.row(i);
      double sq = 0.0;
      for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = a[c] - m[c];
        sq += d * d;
        adj[c] = 2.0 * weight[i] * inv_batch * d;
      }
      penalty += weight[i] * sq;
    }
    result.adjoints[j - 1] = std::move(adjoint);
  }
  result.penalty = penalty * inv_batch;
  return result;
}

struct LossBreakdown {
  double ce = 0.0;
  double svsl = 0.0;
  double total = 0.0;
  Tensor2D logit_grad;
  LayerAdjoints adjoints;
};

// Batch loss: cross-entropy plus the variability penalty. With alpha = 0 the
// result is plain cross-entropy down to the last bit, including an empty
// adjoint set.
inline LossBreakdown total_loss(const ForwardTrace& trace,
                                const std::vector<std::size_t>& labels,
                                const SvslConfig& config, bool in_tpt = true) {
  auto ce = cross_entropy(trace.logits(), labels);
  auto penalty = svsl_penalty(trace, labels, config, in_tpt);
  LossBreakdown out;
  out.ce = ce.loss;
  out.svsl = penalty.penalty;
  out.total = out.ce + out.svsl;
  out.logit_grad = std::move(ce.logit_grad);
  out.adjoints = std::move(penalty.adjoints);
  return out;
}

}  // namespace svsl
