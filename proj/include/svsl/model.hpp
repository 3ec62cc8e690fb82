#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "svsl/error.hpp"
#include "svsl/rng.hpp"
#include "svsl/tensor.hpp"

namespace svsl {

enum class Activation { relu, identity };

inline std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw ContractViolation("unknown activation '" + s + "'");
}

struct LayerSpec {
  std::size_t output_width = 0;
  Activation activation = Activation::relu;
};

// Fully-connected network: layer j maps B x n_{j-1} -> B x n_j through
// x W_j + b_j followed by the layer's activation. The last layer is expected
// to be identity so its outputs are logits.
struct NetworkParams {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> layers;
  std::vector<Tensor2D> weights;  // W_j is n_{j-1} x n_j
  std::vector<Tensor2D> biases;   // b_j is 1 x n_j

  std::size_t layer_count() const { return layers.size(); }

  // n_0 .. n_k
  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input_dim};
    for (const auto& l : layers) w.push_back(l.output_width);
    return w;
  }
};

// Every post-activation output of one forward pass. activations[j-1] holds
// layer j's output; the last entry is the logits.
struct ForwardTrace {
  Tensor2D input;
  std::vector<Tensor2D> activations;

  const Tensor2D& logits() const { return activations.back(); }
  const Tensor2D& layer(std::size_t j) const { return activations[j - 1]; }
};

struct ParamGrads {
  std::vector<Tensor2D> weights;
  std::vector<Tensor2D> biases;
};

// One optional adjoint per layer (index j-1 for layer j), added to the
// backpropagated gradient at that layer's post-activation output.
using LayerAdjoints = std::vector<std::optional<Tensor2D>>;

// He-style init: W ~ N(0, 2/fan_in), biases zero. Deterministic given the
// generator state.
inline NetworkParams init_network(std::size_t input_dim,
                                  const std::vector<LayerSpec>& specs,
                                  RngState& rng) {
  require(input_dim >= 1, "init_network: input_dim must be >= 1");
  require(!specs.empty(), "init_network: need at least one layer");
  for (const auto& s : specs)
    require(s.output_width >= 1, "init_network: zero layer width");

  NetworkParams params;
  params.input_dim = input_dim;
  params.layers = specs;
  std::size_t fan_in = input_dim;
  for (const auto& spec : specs) {
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor2D w(fan_in, spec.output_width);
    for (double& v : w.data()) v = scale * rng.next_gaussian();
    params.weights.push_back(std::move(w));
    params.biases.emplace_back(1, spec.output_width);
    fan_in = spec.output_width;
  }
  return params;
}

inline Tensor2D apply_layer(const NetworkParams& params, std::size_t index,
                            const Tensor2D& input) {
  Tensor2D z = matmul(input, params.weights[index]);
  const auto& bias = params.biases[index];
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double* row = z.row(r).data();
    for (std::size_t c = 0; c < z.cols(); ++c) row[c] += bias(0, c);
  }
  return params.layers[index].activation == Activation::relu ? relu(z) : z;
}

inline ForwardTrace forward_with_trace(const NetworkParams& params, const Tensor2D& x) {
  require(x.cols() == params.input_dim,
          "forward: input has " + std::to_string(x.cols()) +
              " features, network expects " + std::to_string(params.input_dim));
  ForwardTrace trace;
  trace.input = x;
  const Tensor2D* current = &trace.input;
  for (std::size_t j = 0; j < params.layer_count(); ++j) {
    trace.activations.push_back(apply_layer(params, j, *current));
    current = &trace.activations.back();
  }
  return trace;
}

// Truncated forward pass: computes g^(j) only, for early-exit inference.
inline Tensor2D forward_to_layer(const NetworkParams& params, const Tensor2D& x,
                                 std::size_t layer) {
  require(layer >= 1 && layer <= params.layer_count(),
          "forward_to_layer: layer " + std::to_string(layer) + " out of 1.." +
              std::to_string(params.layer_count()));
  require(x.cols() == params.input_dim,
          "forward_to_layer: input has " + std::to_string(x.cols()) +
              " features, network expects " + std::to_string(params.input_dim));
  Tensor2D current = x;
  for (std::size_t j = 0; j < layer; ++j) current = apply_layer(params, j, current);
  return current;
}

inline std::vector<std::size_t> predict(const NetworkParams& params, const Tensor2D& x) {
  const Tensor2D logits = forward_to_layer(params, x, params.layer_count());
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = argmax_row(logits.row(i));
  return out;
}

// Reverse-mode gradients. logit_grad is dLoss/dlogits; each provided adjoint
// is added to the incoming gradient at its layer's post-activation output
// before propagating further down, which is how per-layer penalty terms feed
// the same backward pass as the head loss. ReLU masks are recovered from the
// stored post-activations (output > 0 iff pre-activation > 0).
inline ParamGrads backward(const NetworkParams& params, const ForwardTrace& trace,
                           const Tensor2D& logit_grad,
                           const LayerAdjoints& adjoints = {}) {
  const std::size_t k = params.layer_count();
  require(trace.activations.size() == k, "backward: trace does not match network");
  require(logit_grad.same_shape(trace.logits()),
          "backward: logit_grad shape " + logit_grad.shape_str() +
              " != logits shape " + trace.logits().shape_str());
  require(adjoints.empty() || adjoints.size() == k,
          "backward: expected " + std::to_string(k) + " adjoint slots, got " +
              std::to_string(adjoints.size()));
  for (std::size_t j = 0; j < adjoints.size(); ++j)
    if (adjoints[j])
      require(adjoints[j]->same_shape(trace.activations[j]),
              "backward: adjoint for layer " + std::to_string(j + 1) +
                  " has shape " + adjoints[j]->shape_str() + ", activation is " +
                  trace.activations[j].shape_str());

  ParamGrads grads;
  grads.weights.resize(k);
  grads.biases.resize(k);

  Tensor2D grad_out = logit_grad;  // dLoss/dG_j for the layer being processed
  if (!adjoints.empty() && adjoints[k - 1]) {
    const auto& adj = *adjoints[k - 1];
    for (std::size_t i = 0; i < grad_out.size(); ++i)
      grad_out.data()[i] += adj.data()[i];
  }

  for (std::size_t j = k; j-- > 0;) {
    // Through the activation.
    Tensor2D grad_z = std::move(grad_out);
    if (params.layers[j].activation == Activation::relu) {
      const auto& act = trace.activations[j];
      for (std::size_t i = 0; i < grad_z.size(); ++i)
        if (!(act.data()[i] > 0.0)) grad_z.data()[i] = 0.0;
    }

    const Tensor2D& layer_in = j == 0 ? trace.input : trace.activations[j - 1];
    grads.weights[j] = matmul(transpose(layer_in), grad_z);
    Tensor2D bias_grad(1, grad_z.cols());
    for (std::size_t r = 0; r < grad_z.rows(); ++r)
      for (std::size_t c = 0; c < grad_z.cols(); ++c)
        bias_grad(0, c) += grad_z(r, c);
    grads.biases[j] = std::move(bias_grad);

    if (j > 0) {
      grad_out = matmul(grad_z, transpose(params.weights[j]));
      if (!adjoints.empty() && adjoints[j - 1]) {
        const auto& adj = *adjoints[j - 1];
        for (std::size_t i = 0; i < grad_out.size(); ++i)
          grad_out.data()[i] += adj.data()[i];
      }
    }
  }
  return grads;
}

}  // namespace svsl
