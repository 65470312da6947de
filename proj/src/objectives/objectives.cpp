#include "perinv/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "perinv/errors.hpp"

namespace perinv {

GroupWeights GroupWeights::uniform(std::size_t groups) {
  if (groups == 0) throw PreconditionError("GroupWeights: need at least one group");
  return GroupWeights{std::vector<double>(groups, 1.0 / static_cast<double>(groups))};
}

bool GroupWeights::on_simplex(double tol) const {
  double s = 0.0;
  for (double v : q) {
    if (!(v >= 0.0)) return false;
    s += v;
  }
  return !q.empty() && std::abs(s - 1.0) <= tol;
}

void ObjectiveConfig::validate() const {
  if (!(lambda >= 0.0)) throw PreconditionError("lambda must be >= 0");
  if (lambda_warmup_rounds < 0) throw PreconditionError("lambda_warmup_rounds must be >= 0");
  if (!(dro_step > 0.0)) throw PreconditionError("dro_step must be > 0");
}

ad::Var dummy_grad_on_tape(ad::Var logits, const Tensor& targets) {
  ad::Tape& tape = logits.tape();
  const double m = static_cast<double>(targets.rows());
  ad::Var residual = ad::sub(ad::softmax_rows(logits), tape.constant(targets));
  return ad::scale(ad::dot(residual, logits), 1.0 / m);
}

namespace {

using Targets = std::vector<Tensor>;

std::shared_ptr<const Targets> targets_for(std::span<const Environment> envs, const ModelArch& arch) {
  if (envs.empty()) throw PreconditionError("objective needs at least one environment");
  auto out = std::make_shared<Targets>();
  for (const auto& e : envs) {
    e.validate();
    out->push_back(one_hot(e.labels, arch.num_classes));
  }
  return out;
}

ad::Var irm_on_tape(ad::Tape& tape, std::span<const ad::Var> params, const ModelArch& arch,
                    std::span<const Environment> envs, const Targets& targets, double lambda) {
  ad::Var total;
  for (std::size_t i = 0; i < envs.size(); ++i) {
    ad::Var logits = forward_on_tape(tape, params, arch, envs[i].inputs);
    ad::Var term = cross_entropy_on_tape(logits, targets[i]);
    if (lambda != 0.0) {
      term = ad::add(term, ad::scale(ad::square(dummy_grad_on_tape(logits, targets[i])), lambda));
    }
    total = i == 0 ? term : ad::add(total, term);
  }
  return total;
}

ad::Var groupdro_on_tape(ad::Tape& tape, std::span<const ad::Var> params, const ModelArch& arch,
                         std::span<const Environment> envs, const Targets& targets,
                         const GroupWeights& weights) {
  ad::Var total;
  for (std::size_t i = 0; i < envs.size(); ++i) {
    ad::Var logits = forward_on_tape(tape, params, arch, envs[i].inputs);
    ad::Var term = ad::scale(cross_entropy_on_tape(logits, targets[i]), weights.q[i]);
    total = i == 0 ? term : ad::add(total, term);
  }
  return total;
}

void check_weights(std::span<const Environment> envs, const GroupWeights& weights) {
  if (weights.size() != envs.size()) {
    throw PreconditionError("group weights have " + std::to_string(weights.size()) +
                            " entries for " + std::to_string(envs.size()) + " environments");
  }
}

}  // namespace

double dummy_grad(const ParamVector& params, const ModelArch& arch, const Environment& env) {
  check_layout(params, arch);
  env.validate();
  const Tensor targets = one_hot(env.labels, arch.num_classes);
  return ad::evaluate(
      [&](ad::Tape& tape, std::span<const ad::Var> p) {
        return dummy_grad_on_tape(forward_on_tape(tape, p, arch, env.inputs), targets);
      },
      params);
}

ad::Objective irm_objective(const ModelArch& arch, std::span<const Environment> envs, double lambda) {
  if (!(lambda >= 0.0)) throw PreconditionError("lambda must be >= 0");
  auto targets = targets_for(envs, arch);
  return [arch, envs, targets, lambda](ad::Tape& tape, std::span<const ad::Var> p) {
    return irm_on_tape(tape, p, arch, envs, *targets, lambda);
  };
}

double irm_loss(const ParamVector& params, const ModelArch& arch, std::span<const Environment> envs,
                double lambda) {
  check_layout(params, arch);
  return ad::evaluate(irm_objective(arch, envs, lambda), params);
}

ad::Objective groupdro_objective(const ModelArch& arch, std::span<const Environment> envs,
                                 const GroupWeights& weights) {
  check_weights(envs, weights);
  auto targets = targets_for(envs, arch);
  return [arch, envs, targets, weights](ad::Tape& tape, std::span<const ad::Var> p) {
    return groupdro_on_tape(tape, p, arch, envs, *targets, weights);
  };
}

double groupdro_loss(const ParamVector& params, const ModelArch& arch,
                     std::span<const Environment> envs, const GroupWeights& weights) {
  check_layout(params, arch);
  return ad::evaluate(groupdro_objective(arch, envs, weights), params);
}

GroupWeights groupdro_update_q(const GroupWeights& weights, std::span<const double> risks,
                               double dro_step) {
  if (weights.size() != risks.size()) {
    throw PreconditionError("groupdro_update_q: " + std::to_string(risks.size()) + " risks for " +
                            std::to_string(weights.size()) + " weights");
  }
  if (!(dro_step > 0.0)) throw PreconditionError("groupdro_update_q: dro_step must be > 0");
  double top = -INFINITY;
  for (double r : risks) {
    if (!std::isfinite(r)) throw PreconditionError("groupdro_update_q: non-finite risk");
    top = std::max(top, dro_step * r);
  }
  GroupWeights out{std::vector<double>(weights.size())};
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.q[i] = weights.q[i] * std::exp(dro_step * risks[i] - top);
    total += out.q[i];
  }
  for (auto& v : out.q) v /= total;
  return out;
}

ad::Var proximal_on_tape(ad::Tape& tape, std::span<const ad::Var> theta, const ParamVector& anchor,
                         double beta) {
  const auto& entries = anchor.layout().entries();
  if (entries.size() != theta.size()) throw LayoutError("proximal term: layout mismatch");
  ad::Var total;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ad::Var d = ad::sum(ad::square(ad::sub(theta[i], tape.constant(anchor.block_tensor(entries[i])))));
    total = i == 0 ? d : ad::add(total, d);
  }
  if (entries.empty()) return tape.constant(Tensor::scalar(0.0));
  return ad::scale(total, beta);
}

ad::Objective local_objective_fn(const ParamVector& anchor, const ModelArch& arch,
                                 std::span<const Environment> envs, double lambda, double beta) {
  if (!(beta >= 0.0)) throw PreconditionError("beta must be >= 0");
  auto invariant = irm_objective(arch, envs, lambda);
  return [invariant, anchor, beta](ad::Tape& tape, std::span<const ad::Var> p) {
    ad::Var loss = invariant(tape, p);
    if (beta == 0.0) return loss;
    return ad::add(loss, proximal_on_tape(tape, p, anchor, beta));
  };
}

ad::Objective local_objective_dro_fn(const ParamVector& anchor, const ModelArch& arch,
                                     std::span<const Environment> envs, const GroupWeights& weights,
                                     double beta) {
  if (!(beta >= 0.0)) throw PreconditionError("beta must be >= 0");
  auto invariant = groupdro_objective(arch, envs, weights);
  return [invariant, anchor, beta](ad::Tape& tape, std::span<const ad::Var> p) {
    ad::Var loss = invariant(tape, p);
    if (beta == 0.0) return loss;
    return ad::add(loss, proximal_on_tape(tape, p, anchor, beta));
  };
}

double local_objective(const ParamVector& theta, const ParamVector& anchor, const ModelArch& arch,
                       std::span<const Environment> envs, double lambda, double beta) {
  check_layout(theta, arch);
  theta.require_same_layout(anchor, "local_objective");
  return ad::evaluate(local_objective_fn(anchor, arch, envs, lambda, beta), theta);
}

}  // namespace perinv
