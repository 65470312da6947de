#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perinv {

// Joint distribution over a discrete label Y and a tuple of discrete features.
struct DiscreteJoint {
  struct Outcome {
    int y = 0;
    std::vector<int> x;
  };

  std::size_t num_features = 0;
  std::vector<Outcome> support;
  std::vector<double> probs;

  // Probabilities non-negative and summing to 1 within 1e-12; tuples of length num_features.
  void validate() const;
};

// I(Y; X_S) in nats. The empty subset has zero information.
double mutual_information_exact(const DiscreteJoint& joint, std::span<const std::size_t> subset);

inline double nats_to_bits(double nats) { return nats / 0.69314718055994530942; }

struct SubsetMI {
  std::vector<std::size_t> subset;  // ascending feature indices
  double mi = 0.0;
};

// Exhaustive argmax of I(Y; S) over subsets of the candidates. Ties go to the
// smallest subset, then the lexicographically first. At most 20 candidates.
SubsetMI best_subset_mi(const DiscreteJoint& joint, std::span<const std::size_t> candidates);

struct ClientFeatureSpec {
  std::vector<std::size_t> invariant_features;  // Phi_i
  // Z_i. When absent, Phi_i minus the global intersection.
  std::optional<std::vector<std::size_t>> extra_features;
};

// Phi_g: features shared by every client, ascending.
std::vector<std::size_t> global_intersection(std::span<const ClientFeatureSpec> clients);

struct Theorem1Result {
  double lhs = 0.0;  // (1/N) sum_i I(Y; Phi_i*)
  double rhs = 0.0;  // (1/N) sum_i I(Y; Phi_g*) + p * delta
  double p = 0.0;    // K / N
  double delta = 0.0;
  std::size_t K = 0;
  std::vector<std::size_t> global_features;
  std::vector<double> personal_mi;  // I(Y; Phi_i*) per client
  std::vector<double> global_mi;    // I(Y; Phi_g*) per client
  std::vector<double> client_delta; // max over z in Z_i of I(Y; z); 0 for homogeneous clients
  bool applicable = true;
  bool degenerate = false;  // no heterogeneous client
  bool holds = false;
  std::string note;

  double gap() const { return lhs - rhs; }
};

// One joint per client. Specs that break the assumption structure come back
// with applicable = false rather than an error.
Theorem1Result theorem1_gap(std::span<const ClientFeatureSpec> clients, std::span<const DiscreteJoint> joints);

struct Theorem1Spec {
  std::vector<ClientFeatureSpec> clients;
  std::vector<DiscreteJoint> joints;
};

// Theorem-1 spec file:
//
//   # comment
//   features <F>
//   client                 one block per client, in order
//   phi <i> <j> ...        invariant feature indices (may be empty)
//   z <i> ...              optional heterogeneous features
//   <y> <x_1> ... <x_F> <prob>   one line per outcome with non-zero mass
//   end
//
// Errors carry the offending line number.
Theorem1Spec parse_theorem1_spec(const std::string& text);
Theorem1Spec load_theorem1_spec(const std::filesystem::path& path);
std::string theorem1_spec_to_string(const Theorem1Spec& spec);

struct RandomSpecOptions {
  std::size_t max_clients = 4;
  std::size_t max_features = 6;
};

// Random spec satisfying the assumption: binary features drawn independently
// per client, Y from a random conditional table, Phi_g shared by all clients
// and every other feature missing from at least one client.
Theorem1Spec random_theorem1_spec(std::uint64_t seed, const RandomSpecOptions& options = {});

// Least-squares slope of log(running min of series) against log(t), t = 1..n.
double convergence_slope(std::span<const double> series);

}  // namespace perinv
