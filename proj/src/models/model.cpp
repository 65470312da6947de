#include "perinv/model.hpp"

#include <cmath>
#include <memory>

#include "perinv/errors.hpp"
#include "perinv/rng.hpp"

namespace perinv {

void Environment::validate() const {
  if (labels.empty()) throw PreconditionError("environment '" + context_id + "' is empty");
  if (inputs.rows() != labels.size() || inputs.rank() < 2) {
    throw PreconditionError("environment '" + context_id + "': inputs " +
                            shape_str(inputs.shape()) + " do not match " +
                            std::to_string(labels.size()) + " labels");
  }
}

Environment concat(const std::vector<Environment>& envs, std::string context_id) {
  if (envs.empty()) throw PreconditionError("concat: no environments");
  const std::size_t d = envs.front().feature_dim();
  std::vector<double> data;
  std::vector<int> labels;
  for (const auto& e : envs) {
    if (e.feature_dim() != d) throw LayoutError("concat: feature dimensions differ");
    data.insert(data.end(), e.inputs.data().begin(), e.inputs.data().end());
    labels.insert(labels.end(), e.labels.begin(), e.labels.end());
  }
  const std::size_t m = labels.size();
  return Environment{std::move(context_id), Tensor(Shape{m, d}, std::move(data)), std::move(labels), {}};
}

void ModelArch::validate() const {
  if (input_dim == 0 || num_classes == 0) throw PreconditionError("model dimensions must be positive");
  if (hidden_dims.empty()) throw PreconditionError("model needs at least one hidden layer");
  for (auto h : hidden_dims) {
    if (h == 0) throw PreconditionError("hidden dimensions must be positive");
  }
}

ParamLayout ModelArch::layout() const {
  validate();
  ParamLayout layout;
  std::size_t fan_in = input_dim;
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
    const std::string name = "hidden" + std::to_string(i);
    layout.add(name + ".weight", Shape{hidden_dims[i], fan_in});
    layout.add(name + ".bias", Shape{hidden_dims[i]});
    fan_in = hidden_dims[i];
  }
  layout.add("classifier.weight", Shape{num_classes, fan_in});
  layout.add("classifier.bias", Shape{num_classes});
  return layout;
}

void check_layout(const ParamVector& params, const ModelArch& arch) {
  if (!(params.layout() == arch.layout())) {
    throw LayoutError("parameter layout does not match the model architecture");
  }
}

ParamVector init_params(const ModelArch& arch, std::uint64_t seed) {
  ParamVector params(arch.layout());
  Rng rng(seed);
  for (const auto& e : params.layout().entries()) {
    if (e.shape.size() != 2) continue;  // biases stay zero
    const double fan_out = static_cast<double>(e.shape[0]);
    const double fan_in = static_cast<double>(e.shape[1]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : params.block(e)) w = rng.uniform(-bound, bound);
  }
  return params;
}

namespace {

Tensor as_matrix(const Tensor& inputs, const ModelArch& arch) {
  if (inputs.rank() < 2 || inputs.row_size() != arch.input_dim) {
    throw LayoutError("inputs of shape " + shape_str(inputs.shape()) + " do not flatten to [m, " +
                      std::to_string(arch.input_dim) + "]");
  }
  if (inputs.rank() == 2) return inputs;
  return inputs.reshaped(Shape{inputs.rows(), inputs.row_size()});
}

}  // namespace

ad::Var forward_on_tape(ad::Tape& tape, std::span<const ad::Var> params, const ModelArch& arch,
                        const Tensor& inputs) {
  const std::size_t layers = arch.hidden_dims.size() + 1;
  if (params.size() != 2 * layers) throw LayoutError("forward: wrong number of parameter blocks");
  ad::Var h = tape.constant(as_matrix(inputs, arch));
  for (std::size_t i = 0; i + 1 < layers; ++i) {
    h = ad::relu(ad::linear(h, params[2 * i], params[2 * i + 1]));
  }
  return ad::linear(h, params[2 * (layers - 1)], params[2 * (layers - 1) + 1]);
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
  Tensor t(Shape{labels.size(), num_classes}, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw PreconditionError("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
    t[i * num_classes + static_cast<std::size_t>(y)] = 1.0;
  }
  return t;
}

ad::Var cross_entropy_on_tape(ad::Var logits, const Tensor& targets) {
  ad::Tape& tape = logits.tape();
  const double m = static_cast<double>(targets.rows());
  ad::Var picked = ad::dot(ad::log_softmax_rows(logits), tape.constant(targets));
  return ad::scale(picked, -1.0 / m);
}

ad::Objective risk_objective(const ModelArch& arch, const Environment& env) {
  env.validate();
  auto targets = std::make_shared<const Tensor>(one_hot(env.labels, arch.num_classes));
  return [arch, &env, targets](ad::Tape& tape, std::span<const ad::Var> params) {
    return cross_entropy_on_tape(forward_on_tape(tape, params, arch, env.inputs), *targets);
  };
}

Tensor forward(const ParamVector& params, const ModelArch& arch, const Tensor& inputs) {
  check_layout(params, arch);
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& e : params.layout().entries()) vars.push_back(tape.constant(params.block_tensor(e)));
  return forward_on_tape(tape, vars, arch, inputs).value();
}

double risk(const ParamVector& params, const ModelArch& arch, const Environment& env) {
  check_layout(params, arch);
  return ad::evaluate(risk_objective(arch, env), params);
}

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
  const std::size_t m = logits.rows();
  const std::size_t k = logits.row_size();
  if (m != labels.size() || m == 0) throw PreconditionError("accuracy: empty or mismatched labels");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[i * k + c] > logits[i * k + best]) best = c;
    }
    if (static_cast<int>(best) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m);
}

double accuracy(const ParamVector& params, const ModelArch& arch, const Environment& env) {
  env.validate();
  return accuracy_from_logits(forward(params, arch, env.inputs), env.labels);
}

}  // namespace perinv
