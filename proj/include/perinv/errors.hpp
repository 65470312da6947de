#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace perinv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated operation precondition (empty environment, bad probability, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Parameter layouts or tensor shapes that do not line up.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced by a differentiable operation.
class NumericError : public Error {
 public:
  NumericError(const std::string& op, const std::string& what)
      : Error("numeric overflow in '" + op + "': " + what), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

// Malformed binary or text input.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Input shorter than its header promises.
class LengthError : public Error {
 public:
  using Error::Error;
};

// Not enough source data, or too many candidates for exhaustive search.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Ill-posed generator spec (e.g. a singular mixing matrix).
class SpecError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int round, int client, const std::string& what)
      : Error("divergence at round " + std::to_string(round) + ", client " +
              std::to_string(client) + ": " + what),
        round_(round),
        client_(client) {}
  int round() const { return round_; }
  int client() const { return client_; }

 private:
  int round_;
  int client_;
};

// Configuration problems; carries every offending key.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : Error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "invalid configuration:";
    for (const auto& s : items) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

}  // namespace perinv
