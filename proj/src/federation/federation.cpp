#include "perinv/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "perinv/errors.hpp"
#include "perinv/rng.hpp"
#include "perinv/text.hpp"

namespace perinv {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::perinvfl: return "perinvfl";
    case Method::fedavg: return "fedavg";
    case Method::irm_dist: return "irm_dist";
    case Method::groupdro_dist: return "groupdro_dist";
    case Method::irm_l2: return "irm_l2";
    case Method::irm_ft: return "irm_ft";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : {Method::perinvfl, Method::fedavg, Method::irm_dist, Method::groupdro_dist, Method::irm_l2,
                   Method::irm_ft}) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

bool is_personalized(Method m) {
  return m == Method::perinvfl || m == Method::irm_l2 || m == Method::irm_ft;
}

void Hyperparams::validate() const {
  std::vector<std::string> bad;
  if (T < 1) bad.push_back("hyper.T must be >= 1");
  if (R < 1) bad.push_back("hyper.R must be >= 1");
  if (S < 0) bad.push_back("hyper.S must be >= 0");
  if (!(eta >= 0.0)) bad.push_back("hyper.eta must be >= 0");
  if (!(gamma >= 0.0)) bad.push_back("hyper.gamma must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad.push_back("hyper.alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) bad.push_back("hyper.beta must be >= 0");
  for (double b : client_beta) {
    if (!(b >= 0.0)) bad.push_back("hyper.client_beta entries must be >= 0");
  }
  if (!(lambda >= 0.0)) bad.push_back("hyper.lambda must be >= 0");
  if (lambda_warmup_rounds < 0) bad.push_back("hyper.lambda_warmup_rounds must be >= 0");
  if (!(dro_step > 0.0)) bad.push_back("hyper.dro_step must be > 0");
  if (eval_every < 1) bad.push_back("hyper.eval_every must be >= 1");
  if (!bad.empty()) throw ValidationError(bad);
}

double Hyperparams::beta_for(int client) const {
  if (client_beta.empty()) return beta;
  if (client < 0 || static_cast<std::size_t>(client) >= client_beta.size()) {
    throw ValidationError({"hyper.client_beta has no entry for client " + std::to_string(client)});
  }
  return client_beta[static_cast<std::size_t>(client)];
}

namespace {

struct Step {
  ParamVector params;
  double loss;
};

// Plain gradient step on an objective, reporting the pre-step loss.
Step descend(const ad::Objective& f, const ParamVector& at, double rate) {
  auto [value, g] = ad::value_and_grad(f, at);
  ParamVector next = at;
  next.axpy(-rate, g);
  return {std::move(next), value};
}

Step personalized_update(const ParamVector& theta, const ParamVector& anchor, const ad::Objective& invariant,
                         double eta, double beta) {
  theta.require_same_layout(anchor, "personalized_step");
  auto [value, g] = ad::value_and_grad(invariant, theta);
  ParamVector next = theta;
  for (std::size_t k = 0; k < next.size(); ++k) {
    next[k] = theta[k] - eta * (g[k] + 2.0 * beta * (theta[k] - anchor[k]));
  }
  return {std::move(next), value + beta * squared_distance(theta, anchor)};
}

}  // namespace

ParamVector personalized_step(const ParamVector& theta, const ParamVector& anchor,
                              const ad::Objective& invariant_loss, double eta, double beta) {
  return personalized_update(theta, anchor, invariant_loss, eta, beta).params;
}

ParamVector personalized_step(const ParamVector& theta, const ParamVector& anchor, const ModelArch& arch,
                              std::span<const Environment> envs, double eta, double beta, double lambda) {
  check_layout(theta, arch);
  return personalized_step(theta, anchor, irm_objective(arch, envs, lambda), eta, beta);
}

ParamVector local_global_step(const ParamVector& nu_local, const ModelArch& arch,
                              const Environment& local_dataset, double gamma, double lambda) {
  check_layout(nu_local, arch);
  return descend(irm_objective(arch, std::span<const Environment>(&local_dataset, 1), lambda), nu_local, gamma)
      .params;
}

ParamVector aggregate(const ParamVector& nu, std::span<const ParamVector> client_locals, double alpha) {
  if (client_locals.empty()) throw PreconditionError("aggregate: no client models");
  ParamVector mean(nu.layout());
  for (const auto& local : client_locals) mean += local;
  mean *= 1.0 / static_cast<double>(client_locals.size());
  ParamVector out = nu;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = nu[k] - alpha * (nu[k] - mean[k]);
  return out;
}

double global_grad_norm_sq(const ParamVector& nu, const ModelArch& arch,
                           std::span<const Environment> local_datasets, double lambda) {
  const auto f = irm_objective(arch, local_datasets, lambda);
  ParamVector g = ad::grad(f, nu);
  g *= 1.0 / static_cast<double>(local_datasets.size());
  return g.squared_norm();
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

EvalTable evaluate(std::span<const ParamVector> models, const ModelArch& arch,
                   const std::vector<ClientData>& clients) {
  if (models.size() != clients.size()) throw PreconditionError("evaluate: need one model per client");
  EvalTable table;
  const std::size_t cases = clients.empty() ? 0 : clients.front().test.size();
  table.average.assign(cases, 0.0);
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (clients[i].test.size() != cases) throw PreconditionError("evaluate: clients disagree on test cases");
    std::vector<double> row;
    for (std::size_t k = 0; k < cases; ++k) {
      row.push_back(accuracy(models[i], arch, clients[i].test[k]));
      table.average[k] += row.back() / static_cast<double>(clients.size());
    }
    table.accuracy.push_back(std::move(row));
  }
  return table;
}

// ------------------------------------------------------------------ training

namespace {

class Trainer {
 public:
  Trainer(const TrainConfig& config, const std::vector<ClientData>& clients)
      : cfg_(config), h_(config.hyper), arch_(config.arch), method_(config.hyper.method) {
    h_.validate();
    arch_.validate();
    if (clients.empty()) throw PreconditionError("train: no clients");
    server_.nu = init_params(arch_, stream_seed("init", cfg_.seed));
    server_.q = GroupWeights::uniform(clients.size());
    for (const auto& c : clients) {
      ClientState s;
      s.id = c.id;
      s.theta = server_.nu;
      s.nu_local = server_.nu;
      s.train_envs = c.train;
      s.local_dataset = concat(c.train, "client" + std::to_string(c.id) + "/local");
      s.test_envs = c.test;
      s.beta_i = h_.beta_for(static_cast<int>(states_.size()));
      states_.push_back(std::move(s));
      batch_rngs_.emplace_back(stream_seed("client" + std::to_string(c.id) + "/minibatch", cfg_.seed));
    }
    order_ = cfg_.client_order;
    if (order_.empty()) {
      order_.resize(states_.size());
      std::iota(order_.begin(), order_.end(), 0);
    }
    auto sorted = order_;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (sorted.size() != states_.size() || sorted[i] != static_cast<int>(i)) {
        throw PreconditionError("client_order must be a permutation of client indices");
      }
    }
    for (const auto& s : states_) local_datasets_.push_back(s.local_dataset);
  }

  TrainResult run() {
    for (int t = 0; t < h_.T; ++t) {
      server_.round = t;
      if (t % h_.eval_every == 0) log_round(t);
      round(t);
    }
    server_.round = h_.T;
    if (method_ == Method::irm_ft) fine_tune();
    log_round(h_.T);

    TrainResult result;
    result.global = server_.nu;
    for (const auto& s : states_) {
      if (is_personalized(method_)) result.personalized.push_back(s.theta);
      result.eval_models.push_back(eval_model(s));
    }
    result.q = server_.q;
    result.log = std::move(log_);
    return result;
  }

 private:
  bool has_personal_track() const { return method_ == Method::perinvfl || method_ == Method::irm_l2; }

  double global_lambda(int t) const { return method_ == Method::fedavg ? 0.0 : h_.objective().lambda_at(t); }
  double alpha() const { return method_ == Method::fedavg ? 1.0 : h_.alpha; }

  // Training environments for one gradient step, subsampled when minibatching.
  std::span<const Environment> batch_of(std::size_t i, std::span<const Environment> envs,
                                        std::vector<Environment>& storage) {
    if (h_.minibatch == 0) return envs;
    storage.clear();
    for (const auto& e : envs) {
      if (h_.minibatch >= e.size()) {
        storage.push_back(e);
        continue;
      }
      std::vector<std::size_t> idx(e.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      batch_rngs_[i].shuffle(idx.begin(), idx.end());
      idx.resize(h_.minibatch);
      std::sort(idx.begin(), idx.end());
      const std::size_t d = e.feature_dim();
      std::vector<double> x;
      std::vector<int> y;
      for (auto j : idx) {
        x.insert(x.end(), e.inputs.data().begin() + j * d, e.inputs.data().begin() + (j + 1) * d);
        y.push_back(e.labels[j]);
      }
      storage.push_back(Environment{e.context_id, Tensor(Shape{idx.size(), d}, std::move(x)), std::move(y), e.gen});
    }
    return storage;
  }

  ad::Objective global_objective(std::size_t i, std::span<const Environment> dataset, int t) const {
    if (method_ == Method::groupdro_dist) {
      // Decomposed GroupDRO: the client's share q_i of the weighted risk.
      return groupdro_objective(arch_, dataset, GroupWeights{{server_.q.q[i]}});
    }
    return irm_objective(arch_, dataset, global_lambda(t));
  }

  ad::Objective personal_objective(std::size_t i, std::span<const Environment> envs, int t) {
    if (method_ == Method::irm_l2) return irm_objective(arch_, envs, 0.0);
    if (h_.local_loss == LocalLoss::groupdro) {
      auto& q = local_q(i);
      return groupdro_objective(arch_, envs, q);
    }
    return irm_objective(arch_, envs, h_.objective().lambda_at(t));
  }

  GroupWeights& local_q(std::size_t i) {
    if (local_q_.empty()) {
      for (const auto& s : states_) local_q_.push_back(GroupWeights::uniform(s.train_envs.size()));
    }
    return local_q_[i];
  }

  void guard(double loss, int t, int client) const {
    if (!std::isfinite(loss) || loss > cfg_.divergence_limit) {
      throw DivergenceError(t, client, "loss " + format_double(loss));
    }
  }

  void client_round(std::size_t i, int t) {
    ClientState& s = states_[i];
    s.nu_local = server_.nu;
    for (int r = 0; r < h_.R; ++r) {
      if (has_personal_track()) {
        for (int k = 0; k < h_.S; ++k) {
          std::vector<Environment> storage;
          const auto envs = batch_of(i, s.train_envs, storage);
          auto step = personalized_update(s.theta, s.nu_local, personal_objective(i, envs, t), h_.eta, s.beta_i);
          guard(step.loss, t, s.id);
          if (method_ == Method::perinvfl && h_.local_loss == LocalLoss::groupdro) {
            std::vector<double> risks;
            for (const auto& e : envs) risks.push_back(risk(s.theta, arch_, e));
            local_q_[i] = groupdro_update_q(local_q_[i], risks, h_.dro_step);
          }
          s.theta = std::move(step.params);
        }
      }
      std::vector<Environment> storage;
      const auto data = batch_of(i, std::span<const Environment>(&s.local_dataset, 1), storage);
      auto step = descend(global_objective(i, data, t), s.nu_local, h_.gamma);
      guard(step.loss, t, s.id);
      s.nu_local = std::move(step.params);
    }
    if (!s.nu_local.all_finite() || !s.theta.all_finite()) {
      throw DivergenceError(t, s.id, "non-finite parameters");
    }
  }

  void round(int t) {
    std::vector<double> risks;
    if (method_ == Method::groupdro_dist) {
      for (const auto& s : states_) risks.push_back(risk(server_.nu, arch_, s.local_dataset));
    }
    for (int i : order_) {
      try {
        client_round(static_cast<std::size_t>(i), t);
      } catch (const NumericError& e) {
        throw DivergenceError(t, states_[static_cast<std::size_t>(i)].id, e.what());
      }
    }
    std::vector<ParamVector> locals;
    for (const auto& s : states_) locals.push_back(s.nu_local);
    server_.nu = aggregate(server_.nu, locals, alpha());
    if (method_ == Method::groupdro_dist) server_.q = groupdro_update_q(server_.q, risks, h_.dro_step);
  }

  void fine_tune() {
    for (std::size_t i = 0; i < states_.size(); ++i) {
      auto& s = states_[i];
      s.theta = server_.nu;
      for (int k = 0; k < h_.S; ++k) {
        std::vector<Environment> storage;
        const auto envs = batch_of(i, s.train_envs, storage);
        auto step = descend(irm_objective(arch_, envs, 0.0), s.theta, h_.eta);
        guard(step.loss, h_.T, s.id);
        s.theta = std::move(step.params);
      }
    }
  }

  const ParamVector& eval_model(const ClientState& s) const {
    if (has_personal_track() || (method_ == Method::irm_ft && server_.round == h_.T)) return s.theta;
    return server_.nu;
  }

  void add(int t, int client, std::string split, std::string metric, double value) {
    log_.append(MetricRow{std::string(method_name(method_)), cfg_.seed, t, client, std::move(split),
                          std::move(metric), value});
  }

  void log_round(int t) {
    // Global objective at nu^t.
    const int lt = std::min(t, h_.T - 1);
    if (method_ == Method::groupdro_dist) {
      const auto f = groupdro_objective(arch_, local_datasets_, server_.q);
      auto [value, g] = ad::value_and_grad(f, server_.nu);
      add(t, -1, "global", "loss", value);
      add(t, -1, "global", "grad_norm_sq", g.squared_norm());
    } else {
      const double n = static_cast<double>(states_.size());
      auto [value, g] = ad::value_and_grad(irm_objective(arch_, local_datasets_, global_lambda(lt)), server_.nu);
      g *= 1.0 / n;
      add(t, -1, "global", "loss", value / n);
      add(t, -1, "global", "grad_norm_sq", g.squared_norm());
    }
    for (std::size_t i = 0; i < states_.size(); ++i) {
      const auto& s = states_[i];
      const ParamVector& model = eval_model(s);
      add(t, s.id, "train", "accuracy", accuracy(model, arch_, s.local_dataset));
      add(t, s.id, "train", "risk", risk(model, arch_, s.local_dataset));
      for (const auto& e : s.test_envs) {
        const std::string split = e.context_id.substr(e.context_id.find('/') + 1);
        add(t, s.id, split, "accuracy", accuracy(model, arch_, e));
        add(t, s.id, split, "risk", risk(model, arch_, e));
      }
      if (has_personal_track()) add(t, s.id, "model", "prox_dist_sq", squared_distance(s.theta, server_.nu));
      if (method_ == Method::groupdro_dist) add(t, s.id, "global", "q", server_.q.q[i]);
    }
  }

  const TrainConfig& cfg_;
  Hyperparams h_;
  ModelArch arch_;
  Method method_;
  ServerState server_;
  std::vector<ClientState> states_;
  std::vector<Environment> local_datasets_;
  std::vector<Rng> batch_rngs_;
  std::vector<GroupWeights> local_q_;
  std::vector<int> order_;
  MetricsLog log_;
};

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<ClientData>& clients) {
  return Trainer(config, clients).run();
}

TrainResult run_baseline(Method method, TrainConfig config, const std::vector<ClientData>& clients) {
  config.hyper.method = method;
  return train(config, clients);
}

}  // namespace perinv
