#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perinv/autodiff.hpp"
#include "perinv/data.hpp"
#include "perinv/environment.hpp"
#include "perinv/metrics.hpp"
#include "perinv/model.hpp"
#include "perinv/objectives.hpp"

namespace perinv {

enum class Method { perinvfl, fedavg, irm_dist, groupdro_dist, irm_l2, irm_ft };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
// Whether the method evaluates per-client personalized models (else the global model).
bool is_personalized(Method m);

// Which invariant loss drives the personalized track of perinvfl.
enum class LocalLoss { irm, groupdro };

struct Hyperparams {
  // Defaults are the desk-scale settings of the synthetic SEM experiments.
  int T = 100;  // global rounds
  int R = 1;    // local steps on the global model per round
  int S = 10;   // personalized steps per local global step
  double beta = 0.01;
  std::vector<double> client_beta;  // per-client override, empty = beta everywhere
  double eta = 0.005;  // personalized step size
  double gamma = 0.02; // global-model local step size
  double alpha = 1.0;  // aggregation step
  double lambda = 100.0;
  int lambda_warmup_rounds = 0;
  double dro_step = 0.01;
  Method method = Method::perinvfl;
  LocalLoss local_loss = LocalLoss::irm;
  std::size_t minibatch = 0;  // 0 = full batch
  int eval_every = 1;         // metrics cadence in rounds; the final round is always logged

  void validate() const;
  double beta_for(int client) const;
  ObjectiveConfig objective() const { return {lambda, lambda_warmup_rounds, dro_step}; }
};

struct ClientState {
  int id = 0;
  ParamVector theta;
  ParamVector nu_local;
  std::vector<Environment> train_envs;
  Environment local_dataset;  // union of train_envs, one environment of the global objective
  std::vector<Environment> test_envs;
  double beta_i = 0.0;
};

struct ServerState {
  ParamVector nu;
  int round = 0;
  GroupWeights q;  // used by groupdro_dist only
};

struct TrainConfig {
  Hyperparams hyper;
  ModelArch arch;
  std::uint64_t seed = 0;
  // Processing order of clients inside a round; empty = ascending id. Any
  // permutation yields identical results.
  std::vector<int> client_order;
  double divergence_limit = 1e6;
};

struct TrainResult {
  std::vector<ParamVector> personalized;  // theta_i (empty for global-only methods)
  ParamVector global;                     // nu^T
  std::vector<ParamVector> eval_models;   // the model each client is scored with
  GroupWeights q;                         // final GroupDRO weights (groupdro_dist)
  MetricsLog log;
};

// theta - eta * (grad + 2 beta (theta - anchor)), with grad the gradient of the
// client's invariant loss at theta.
ParamVector personalized_step(const ParamVector& theta, const ParamVector& anchor,
                              const ad::Objective& invariant_loss, double eta, double beta);
ParamVector personalized_step(const ParamVector& theta, const ParamVector& anchor, const ModelArch& arch,
                              std::span<const Environment> envs, double eta, double beta, double lambda);

// One gradient step of the single-environment IRM sub-objective on the whole local dataset.
ParamVector local_global_step(const ParamVector& nu_local, const ModelArch& arch,
                              const Environment& local_dataset, double gamma, double lambda);

// nu - alpha (nu - mean(locals)), reduced in the given (client id) order.
ParamVector aggregate(const ParamVector& nu, std::span<const ParamVector> client_locals, double alpha);

// Runs the configured method end to end on prepared client data.
TrainResult train(const TrainConfig& config, const std::vector<ClientData>& clients);
TrainResult run_baseline(Method method, TrainConfig config, const std::vector<ClientData>& clients);

// Squared gradient norm of (1/N) sum_i L_IRM^i(nu; D_i), the quantity the
// convergence diagnostic tracks.
double global_grad_norm_sq(const ParamVector& nu, const ModelArch& arch,
                           std::span<const Environment> local_datasets, double lambda);

struct EvalTable {
  // accuracy[client][case]
  std::vector<std::vector<double>> accuracy;
  // mean over clients, per case
  std::vector<double> average;
};

EvalTable evaluate(std::span<const ParamVector> models, const ModelArch& arch,
                   const std::vector<ClientData>& clients);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

// Population mean and standard deviation (a single value has std 0).
MeanStd mean_std(std::span<const double> values);

}  // namespace perinv
