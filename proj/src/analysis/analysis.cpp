#include "perinv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "perinv/errors.hpp"
#include "perinv/rng.hpp"
#include "perinv/text.hpp"

namespace perinv {

void DiscreteJoint::validate() const {
  if (support.size() != probs.size()) throw PreconditionError("joint: support and probs differ in length");
  if (support.empty()) throw PreconditionError("joint: empty support");
  double total = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (!(probs[k] >= 0.0)) throw PreconditionError("joint: negative or NaN probability");
    if (support[k].x.size() != num_features) {
      throw PreconditionError("joint: outcome " + std::to_string(k) + " has " +
                              std::to_string(support[k].x.size()) + " features, expected " +
                              std::to_string(num_features));
    }
    total += probs[k];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw PreconditionError("joint: probabilities sum to " + format_double(total));
  }
}

double mutual_information_exact(const DiscreteJoint& joint, std::span<const std::size_t> subset) {
  joint.validate();
  for (auto f : subset) {
    if (f >= joint.num_features) throw PreconditionError("feature index " + std::to_string(f) + " out of range");
  }
  if (subset.empty()) return 0.0;
  std::map<std::pair<int, std::vector<int>>, double> p_ys;
  std::map<std::vector<int>, double> p_s;
  std::map<int, double> p_y;
  for (std::size_t k = 0; k < joint.support.size(); ++k) {
    const double p = joint.probs[k];
    if (p == 0.0) continue;
    std::vector<int> s;
    s.reserve(subset.size());
    for (auto f : subset) s.push_back(joint.support[k].x[f]);
    p_y[joint.support[k].y] += p;
    p_s[s] += p;
    p_ys[{joint.support[k].y, std::move(s)}] += p;
  }
  double mi = 0.0;
  for (const auto& [key, p] : p_ys) mi += p * std::log(p / (p_y[key.first] * p_s[key.second]));
  return std::max(mi, 0.0);
}

SubsetMI best_subset_mi(const DiscreteJoint& joint, std::span<const std::size_t> candidates) {
  if (candidates.size() > 20) {
    throw CapacityError("best_subset_mi: " + std::to_string(candidates.size()) + " candidates, at most 20");
  }
  std::vector<std::size_t> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw PreconditionError("best_subset_mi: duplicate candidate features");
  }
  std::vector<SubsetMI> all;
  const std::uint32_t count = 1u << sorted.size();
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    SubsetMI s;
    for (std::size_t b = 0; b < sorted.size(); ++b) {
      if (mask & (1u << b)) s.subset.push_back(sorted[b]);
    }
    s.mi = mutual_information_exact(joint, s.subset);
    all.push_back(std::move(s));
  }
  double best = 0.0;
  for (const auto& s : all) best = std::max(best, s.mi);
  // Supersets of a maximizer can differ from it by rounding only.
  const double tol = 1e-12 * std::max(1.0, best);
  const SubsetMI* pick = nullptr;
  for (const auto& s : all) {
    if (s.mi < best - tol) continue;
    if (!pick || s.subset.size() < pick->subset.size() ||
        (s.subset.size() == pick->subset.size() && s.subset < pick->subset)) {
      pick = &s;
    }
  }
  return *pick;
}

std::vector<std::size_t> global_intersection(std::span<const ClientFeatureSpec> clients) {
  if (clients.empty()) return {};
  std::vector<std::size_t> acc = clients.front().invariant_features;
  std::sort(acc.begin(), acc.end());
  for (const auto& c : clients.subspan(1)) {
    std::vector<std::size_t> phi = c.invariant_features;
    std::sort(phi.begin(), phi.end());
    std::vector<std::size_t> out;
    std::set_intersection(acc.begin(), acc.end(), phi.begin(), phi.end(), std::back_inserter(out));
    acc = std::move(out);
  }
  acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
  return acc;
}

namespace {

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool contains_all(const std::vector<std::size_t>& super, const std::vector<std::size_t>& sub) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

}  // namespace

Theorem1Result theorem1_gap(std::span<const ClientFeatureSpec> clients, std::span<const DiscreteJoint> joints) {
  if (clients.empty()) throw PreconditionError("theorem1_gap: no clients");
  if (clients.size() != joints.size()) throw PreconditionError("theorem1_gap: need one joint per client");
  const std::size_t n = clients.size();
  Theorem1Result res;
  res.global_features = global_intersection(clients);

  std::vector<std::vector<std::size_t>> phi(n), z(n);
  for (std::size_t i = 0; i < n; ++i) {
    phi[i] = sorted_unique(clients[i].invariant_features);
    if (clients[i].extra_features) {
      z[i] = sorted_unique(*clients[i].extra_features);
    } else {
      std::set_difference(phi[i].begin(), phi[i].end(), res.global_features.begin(), res.global_features.end(),
                          std::back_inserter(z[i]));
    }
  }

  const auto inapplicable = [&](std::string why) {
    res.applicable = false;
    res.holds = false;
    res.note = std::move(why);
    return res;
  };

  double personal = 0.0, global = 0.0;
  std::vector<double> deltas;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& joint = joints[i];
    res.personal_mi.push_back(best_subset_mi(joint, phi[i]).mi);
    res.global_mi.push_back(best_subset_mi(joint, res.global_features).mi);
    personal += res.personal_mi.back();
    global += res.global_mi.back();
    double d = 0.0;
    if (!z[i].empty()) {
      const std::string who = "client " + std::to_string(i);
      if (!contains_all(phi[i], z[i])) return inapplicable(who + ": Z is not a subset of its invariant features");
      std::vector<std::size_t> others;
      bool first = true;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (first) {
          others = phi[j];
          first = false;
        } else {
          std::vector<std::size_t> tmp;
          std::set_intersection(others.begin(), others.end(), phi[j].begin(), phi[j].end(),
                                std::back_inserter(tmp));
          others = std::move(tmp);
        }
      }
      if (n > 1 && contains_all(others, z[i])) {
        return inapplicable(who + ": Z lies inside the other clients' shared invariant features");
      }
      d = best_subset_mi(joint, z[i]).mi;
      if (!(d > 1e-12)) return inapplicable(who + ": Z carries no information about Y");
      deltas.push_back(d);
    }
    res.client_delta.push_back(d);
  }

  res.K = deltas.size();
  res.p = static_cast<double>(res.K) / static_cast<double>(n);
  res.delta = deltas.empty() ? 0.0 : *std::min_element(deltas.begin(), deltas.end());
  res.degenerate = res.K == 0;
  res.lhs = personal / static_cast<double>(n);
  res.rhs = global / static_cast<double>(n) + res.p * res.delta;
  res.holds = res.lhs >= res.rhs - 1e-12;
  if (res.degenerate) res.note = "degenerate: no heterogeneous clients, the bound reduces to equality";
  return res;
}

// ---------------------------------------------------------------- spec files

namespace {

[[noreturn]] void spec_fail(std::size_t line, const std::string& what) {
  throw FormatError("theorem-1 spec line " + std::to_string(line) + ": " + what);
}

std::vector<std::size_t> parse_indices(const std::vector<std::string>& tokens, std::size_t line,
                                       std::size_t features) {
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k < tokens.size(); ++k) {
    long long v;
    if (!parse_int(tokens[k], v) || v < 0) spec_fail(line, "bad feature index '" + tokens[k] + "'");
    if (static_cast<std::size_t>(v) >= features) spec_fail(line, "feature index " + tokens[k] + " out of range");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

}  // namespace

Theorem1Spec parse_theorem1_spec(const std::string& text) {
  Theorem1Spec spec;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  std::optional<std::size_t> features;
  bool in_client = false;
  bool saw_phi = false;
  std::size_t client_line = 0;
  ClientFeatureSpec client;
  DiscreteJoint joint;

  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const auto tokens = split_ws(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (tokens.empty()) continue;
    const std::string& key = tokens[0];
    if (key == "features") {
      long long v;
      if (features) spec_fail(lineno, "duplicate 'features'");
      if (tokens.size() != 2 || !parse_int(tokens[1], v) || v < 0) spec_fail(lineno, "expected 'features <count>'");
      features = static_cast<std::size_t>(v);
    } else if (key == "client") {
      if (!features) spec_fail(lineno, "'features' must come first");
      if (in_client) spec_fail(lineno, "missing 'end' for the previous client");
      if (tokens.size() != 1) spec_fail(lineno, "'client' takes no arguments");
      in_client = true;
      saw_phi = false;
      client_line = lineno;
      client = {};
      joint = {};
      joint.num_features = *features;
    } else if (!in_client) {
      spec_fail(lineno, "unexpected '" + key + "' outside a client block");
    } else if (key == "phi") {
      if (saw_phi) spec_fail(lineno, "duplicate 'phi'");
      saw_phi = true;
      client.invariant_features = parse_indices(tokens, lineno, *features);
    } else if (key == "z") {
      if (client.extra_features) spec_fail(lineno, "duplicate 'z'");
      client.extra_features = parse_indices(tokens, lineno, *features);
    } else if (key == "end") {
      if (!saw_phi) spec_fail(lineno, "client has no 'phi' line");
      try {
        joint.validate();
      } catch (const PreconditionError& e) {
        spec_fail(client_line, e.what());
      }
      spec.clients.push_back(std::move(client));
      spec.joints.push_back(std::move(joint));
      in_client = false;
    } else {
      if (tokens.size() != *features + 2) {
        spec_fail(lineno, "outcome needs " + std::to_string(*features + 2) + " fields, found " +
                              std::to_string(tokens.size()));
      }
      DiscreteJoint::Outcome o;
      long long v;
      if (!parse_int(tokens[0], v)) spec_fail(lineno, "bad label '" + tokens[0] + "'");
      o.y = static_cast<int>(v);
      for (std::size_t k = 1; k <= *features; ++k) {
        if (!parse_int(tokens[k], v)) spec_fail(lineno, "bad feature value '" + tokens[k] + "'");
        o.x.push_back(static_cast<int>(v));
      }
      double p;
      if (!parse_double(tokens.back(), p) || p < 0.0) spec_fail(lineno, "bad probability '" + tokens.back() + "'");
      joint.support.push_back(std::move(o));
      joint.probs.push_back(p);
    }
  }
  if (in_client) spec_fail(lineno, "missing 'end' for the last client");
  if (spec.clients.empty()) spec_fail(lineno, "no clients");
  return spec;
}

Theorem1Spec load_theorem1_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_theorem1_spec(ss.str());
}

std::string theorem1_spec_to_string(const Theorem1Spec& spec) {
  if (spec.clients.size() != spec.joints.size()) throw PreconditionError("spec: need one joint per client");
  std::string out = "features " + std::to_string(spec.joints.empty() ? 0 : spec.joints[0].num_features) + "\n";
  for (std::size_t i = 0; i < spec.clients.size(); ++i) {
    out += "client\nphi";
    for (auto f : spec.clients[i].invariant_features) out += " " + std::to_string(f);
    out += "\n";
    if (spec.clients[i].extra_features) {
      out += "z";
      for (auto f : *spec.clients[i].extra_features) out += " " + std::to_string(f);
      out += "\n";
    }
    const auto& j = spec.joints[i];
    for (std::size_t k = 0; k < j.support.size(); ++k) {
      out += std::to_string(j.support[k].y);
      for (int v : j.support[k].x) out += " " + std::to_string(v);
      out += " " + format_double(j.probs[k]) + "\n";
    }
    out += "end\n";
  }
  return out;
}

Theorem1Spec random_theorem1_spec(std::uint64_t seed, const RandomSpecOptions& options) {
  if (options.max_clients < 1 || options.max_features < 1) {
    throw PreconditionError("random spec: need at least one client and one feature");
  }
  Rng rng(stream_seed("theorem1-spec", seed));
  const std::size_t n = 1 + rng.below(options.max_clients);
  const std::size_t f = 1 + rng.below(options.max_features);

  std::vector<bool> shared(f);
  for (std::size_t k = 0; k < f; ++k) shared[k] = rng.bernoulli(0.4);
  std::vector<std::vector<bool>> has(n, std::vector<bool>(f));
  for (std::size_t k = 0; k < f; ++k) {
    for (std::size_t i = 0; i < n; ++i) has[i][k] = shared[k] || rng.bernoulli(0.5);
    if (!shared[k]) has[rng.below(n)][k] = false;  // keeps k out of Phi_g
  }

  Theorem1Spec spec;
  for (std::size_t i = 0; i < n; ++i) {
    ClientFeatureSpec c;
    for (std::size_t k = 0; k < f; ++k) {
      if (has[i][k]) c.invariant_features.push_back(k);
    }
    spec.clients.push_back(std::move(c));

    std::vector<double> marginal(f);
    for (auto& m : marginal) m = rng.uniform(0.1, 0.9);
    const std::size_t cells = std::size_t{1} << f;
    std::vector<double> p_y1(cells);
    for (auto& p : p_y1) p = rng.uniform(0.05, 0.95);
    DiscreteJoint joint;
    joint.num_features = f;
    double total = 0.0;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      std::vector<int> x(f);
      double px = 1.0;
      for (std::size_t k = 0; k < f; ++k) {
        x[k] = static_cast<int>((cell >> k) & 1u);
        px *= x[k] ? marginal[k] : 1.0 - marginal[k];
      }
      for (int y = 0; y < 2; ++y) {
        joint.support.push_back({y, x});
        joint.probs.push_back(px * (y ? p_y1[cell] : 1.0 - p_y1[cell]));
        total += joint.probs.back();
      }
    }
    for (auto& p : joint.probs) p /= total;
    spec.joints.push_back(std::move(joint));
  }
  return spec;
}

double convergence_slope(std::span<const double> series) {
  if (series.size() < 10) throw PreconditionError("convergence_slope: need at least 10 values");
  for (double v : series) {
    if (!(v > 0.0) || !std::isfinite(v)) throw PreconditionError("convergence_slope: values must be positive");
  }
  const double n = static_cast<double>(series.size());
  double running = series[0];
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    running = std::min(running, series[t]);
    const double x = std::log(static_cast<double>(t + 1));
    const double y = std::log(running);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace perinv
