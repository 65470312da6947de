#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "perinv/autodiff.hpp"
#include "perinv/environment.hpp"
#include "perinv/tensor.hpp"

namespace perinv {

enum class Activation { relu };

// f = w o Phi: hidden layers (linear -> relu) form the featurizer Phi, the
// final linear layer is the classifier w.
struct ModelArch {
  std::size_t input_dim = 14 * 14 * 2;
  std::vector<std::size_t> hidden_dims{390, 390};
  std::size_t num_classes = 2;
  Activation activation = Activation::relu;

  void validate() const;
  ParamLayout layout() const;
};

// Xavier-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
ParamVector init_params(const ModelArch& arch, std::uint64_t seed);

// Logits of shape [m, num_classes].
Tensor forward(const ParamVector& params, const ModelArch& arch, const Tensor& inputs);

// Mean softmax cross-entropy over the environment.
double risk(const ParamVector& params, const ModelArch& arch, const Environment& env);

// Fraction of argmax hits; ties resolve to the lower class index.
double accuracy(const ParamVector& params, const ModelArch& arch, const Environment& env);
double accuracy_from_logits(const Tensor& logits, std::span<const int> labels);

// Tape-level building blocks shared with the objectives.
ad::Var forward_on_tape(ad::Tape& tape, std::span<const ad::Var> params, const ModelArch& arch,
                        const Tensor& inputs);
Tensor one_hot(std::span<const int> labels, std::size_t num_classes);
ad::Var cross_entropy_on_tape(ad::Var logits, const Tensor& targets);

ad::Objective risk_objective(const ModelArch& arch, const Environment& env);

void check_layout(const ParamVector& params, const ModelArch& arch);

}  // namespace perinv
