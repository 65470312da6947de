#pragma once

#include <span>
#include <vector>

#include "perinv/autodiff.hpp"
#include "perinv/environment.hpp"
#include "perinv/model.hpp"

namespace perinv {

// Weights on the probability simplex over training environments.
struct GroupWeights {
  std::vector<double> q;

  static GroupWeights uniform(std::size_t groups);
  std::size_t size() const { return q.size(); }
  // Non-negative and summing to one within 1e-12.
  bool on_simplex(double tol = 1e-12) const;
};

struct ObjectiveConfig {
  double lambda = 0.0;
  int lambda_warmup_rounds = 0;
  double dro_step = 0.01;

  void validate() const;
  // Penalty weight in effect at a global round (zero during warmup).
  double lambda_at(int round) const { return round < lambda_warmup_rounds ? 0.0 : lambda; }
};

// Derivative of the risk with respect to a scalar multiplier on the logits,
// at multiplier 1: mean over samples of <softmax(z) - onehot(y), z>.
double dummy_grad(const ParamVector& params, const ModelArch& arch, const Environment& env);
ad::Var dummy_grad_on_tape(ad::Var logits, const Tensor& targets);

// Sum over environments of risk + lambda * dummy_grad^2.
double irm_loss(const ParamVector& params, const ModelArch& arch, std::span<const Environment> envs,
                double lambda);
ad::Objective irm_objective(const ModelArch& arch, std::span<const Environment> envs, double lambda);

// Sum over environments of q_e * risk_e.
double groupdro_loss(const ParamVector& params, const ModelArch& arch,
                     std::span<const Environment> envs, const GroupWeights& weights);
ad::Objective groupdro_objective(const ModelArch& arch, std::span<const Environment> envs,
                                 const GroupWeights& weights);

// Exponentiated-gradient ascent: q_e <- q_e exp(step * risk_e), renormalized.
GroupWeights groupdro_update_q(const GroupWeights& weights, std::span<const double> risks,
                               double dro_step);

// beta * ||theta - anchor||^2 on the tape.
ad::Var proximal_on_tape(ad::Tape& tape, std::span<const ad::Var> theta, const ParamVector& anchor,
                         double beta);

// irm_loss(theta) + beta * ||theta - anchor||^2.
double local_objective(const ParamVector& theta, const ParamVector& anchor, const ModelArch& arch,
                       std::span<const Environment> envs, double lambda, double beta);
ad::Objective local_objective_fn(const ParamVector& anchor, const ModelArch& arch,
                                 std::span<const Environment> envs, double lambda, double beta);

// GroupDRO flavour of the local objective: groupdro_loss(theta) + beta * ||theta - anchor||^2.
ad::Objective local_objective_dro_fn(const ParamVector& anchor, const ModelArch& arch,
                                     std::span<const Environment> envs, const GroupWeights& weights,
                                     double beta);

}  // namespace perinv
