#include <memory>

#include "perinv/harness.hpp"
#include "perinv/rng.hpp"
#include "perinv/text.hpp"

namespace perinv {

namespace {

Environment random_env(Rng& rng, std::size_t n, std::size_t d, const std::string& id) {
  std::vector<double> x(n * d);
  for (auto& v : x) v = rng.normal();
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(2));
  return Environment{id, Tensor(Shape{n, d}, std::move(x)), std::move(y), {}};
}

GradientProbe probe_from(std::string name, ad::Objective f, ParamVector at) {
  return GradientProbe{std::move(name), std::move(at), ad::as_function(f),
                       [f](const ParamVector& p) { return ad::grad(f, p); }};
}

}  // namespace

std::vector<GradientProbe> default_gradient_probes(const GradientCheckConfig& config) {
  ModelArch arch;
  arch.input_dim = 4;
  arch.hidden_dims = {8};
  arch.num_classes = 2;
  std::vector<GradientProbe> probes;
  for (std::size_t k = 0; k < config.instances; ++k) {
    Rng rng(stream_seed("gradcheck/" + std::to_string(k), config.seed));
    // Objectives hold spans into these, so the probes share ownership.
    auto envs = std::make_shared<std::vector<Environment>>();
    envs->push_back(random_env(rng, 8, arch.input_dim, "e0"));
    envs->push_back(random_env(rng, 8, arch.input_dim, "e1"));
    const ParamVector at = init_params(arch, rng.next());
    ParamVector anchor = init_params(arch, rng.next());
    const double lambda = rng.uniform(0.5, 5.0);
    const double beta = rng.uniform(0.1, 2.0);
    const std::span<const Environment> all(*envs);

    auto keep = [envs](ad::Objective f) {
      return ad::Objective([envs, f](ad::Tape& t, std::span<const ad::Var> p) { return f(t, p); });
    };
    probes.push_back(probe_from("risk", keep(risk_objective(arch, (*envs)[0])), at));
    probes.push_back(probe_from("irm_loss", keep(irm_objective(arch, all, lambda)), at));
    probes.push_back(
        probe_from("local_objective", keep(local_objective_fn(anchor, arch, all, lambda, beta)), at));
  }
  return probes;
}

GradientReport check_gradients(std::span<const GradientProbe> probes, const GradientCheckConfig& config) {
  GradientReport report;
  for (const auto& probe : probes) {
    const ParamVector analytic = probe.gradient(probe.at);
    const ParamVector numeric = ad::finite_diff_grad(probe.value, probe.at, config.h);
    GradientCheckEntry e;
    e.name = probe.name;
    e.relative_error = ad::relative_error(analytic, numeric);
    e.pass = e.relative_error <= config.tolerance;
    if (!e.pass) {
      report.pass = false;
      if (std::find(report.failing.begin(), report.failing.end(), e.name) == report.failing.end()) {
        report.failing.push_back(e.name);
      }
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

GradientReport check_gradients(const GradientCheckConfig& config) {
  const auto probes = default_gradient_probes(config);
  return check_gradients(probes, config);
}

std::string format_theorem1(const Theorem1Result& r) {
  std::string out;
  const auto line = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  line("clients", std::to_string(r.personal_mi.size()));
  line("K", std::to_string(r.K));
  line("p", format_double(r.p));
  line("delta", format_double(r.delta));
  line("lhs", format_double(r.lhs));
  line("rhs", format_double(r.rhs));
  line("gap", format_double(r.gap()));
  for (std::size_t i = 0; i < r.personal_mi.size(); ++i) {
    out += "client " + std::to_string(i) + ": I(Y;Phi_i*) = " + format_double(r.personal_mi[i]) +
           ", I(Y;Phi_g*) = " + format_double(r.global_mi[i]);
    if (i < r.client_delta.size()) out += ", delta_i = " + format_double(r.client_delta[i]);
    out += "\n";
  }
  line("applicable", r.applicable ? "true" : "false");
  line("holds", r.holds ? "true" : "false");
  if (!r.note.empty()) out += "note: " + r.note + "\n";
  return out;
}

}  // namespace perinv
