#pragma once

#include <optional>
#include <string>
#include <vector>

#include "perinv/tensor.hpp"

namespace perinv {

// How an environment was generated. Every field is optional because SEM and
// image environments record different things.
struct GenParams {
  std::optional<double> p_e;
  std::optional<int> rotation_deg;
  std::optional<std::string> sem_spec_id;
  std::optional<double> env_strength;

  friend bool operator==(const GenParams&, const GenParams&) = default;
};

// A labeled dataset drawn from one context. `inputs` has the sample index as
// its leading dimension; models flatten the trailing dimensions row-major.
struct Environment {
  std::string context_id;
  Tensor inputs;
  std::vector<int> labels;
  GenParams gen;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return inputs.row_size(); }

  // Throws PreconditionError on an empty or inconsistent environment.
  void validate() const;

  friend bool operator==(const Environment&, const Environment&) = default;
};

// Concatenates environments in order (the union used as a client's whole local dataset).
Environment concat(const std::vector<Environment>& envs, std::string context_id);

}  // namespace perinv
