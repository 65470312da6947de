// Environment file format (text, line oriented):
//
//   perinv-environment 1
//   context_id <string, rest of line>
//   shape <m> <d1> [<d2> ...]
//   p_e <double>            (optional)
//   rotation_deg <int>      (optional)
//   sem_spec_id <string>    (optional)
//   env_strength <double>   (optional)
//   data
//   <label> <v_1> ... <v_k>   one line per sample, k = d1 * d2 * ..., row-major
//
// Doubles are written in shortest round-trip form, so a write/read cycle is exact.

#include <fstream>
#include <sstream>

#include "perinv/data.hpp"
#include "perinv/errors.hpp"
#include "perinv/text.hpp"

namespace perinv {

namespace {

constexpr const char* kMagic = "perinv-environment 1";

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw FormatError("environment file line " + std::to_string(line) + ": " + what);
}

}  // namespace

std::string environment_to_string(const Environment& env) {
  env.validate();
  std::string out = std::string(kMagic) + "\n";
  out += "context_id " + env.context_id + "\n";
  out += "shape";
  for (auto d : env.inputs.shape()) out += " " + std::to_string(d);
  out += "\n";
  if (env.gen.p_e) out += "p_e " + format_double(*env.gen.p_e) + "\n";
  if (env.gen.rotation_deg) out += "rotation_deg " + std::to_string(*env.gen.rotation_deg) + "\n";
  if (env.gen.sem_spec_id) out += "sem_spec_id " + *env.gen.sem_spec_id + "\n";
  if (env.gen.env_strength) out += "env_strength " + format_double(*env.gen.env_strength) + "\n";
  out += "data\n";
  const std::size_t k = env.inputs.row_size();
  for (std::size_t i = 0; i < env.size(); ++i) {
    out += std::to_string(env.labels[i]);
    for (std::size_t j = 0; j < k; ++j) out += " " + format_double(env.inputs[i * k + j]);
    out += "\n";
  }
  return out;
}

Environment environment_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto next = [&]() {
    if (!std::getline(in, line)) fail(lineno + 1, "unexpected end of file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next();
  if (line != kMagic) fail(lineno, "missing '" + std::string(kMagic) + "' header");

  Environment env;
  Shape shape;
  while (true) {
    next();
    if (line == "data") break;
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string value = space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "context_id") {
      env.context_id = value;
    } else if (key == "shape") {
      for (const auto& tok : split_ws(value)) {
        long long v;
        if (!parse_int(tok, v) || v <= 0) fail(lineno, "bad dimension '" + tok + "'");
        shape.push_back(static_cast<std::size_t>(v));
      }
    } else if (key == "p_e" || key == "env_strength") {
      double v;
      if (!parse_double(value, v)) fail(lineno, "bad number '" + value + "'");
      (key == "p_e" ? env.gen.p_e : env.gen.env_strength) = v;
    } else if (key == "rotation_deg") {
      long long v;
      if (!parse_int(value, v)) fail(lineno, "bad rotation '" + value + "'");
      env.gen.rotation_deg = static_cast<int>(v);
    } else if (key == "sem_spec_id") {
      env.gen.sem_spec_id = value;
    } else {
      fail(lineno, "unknown key '" + key + "'");
    }
  }
  if (shape.size() < 2) fail(lineno, "shape must have a sample dimension and a feature dimension");
  const std::size_t m = shape[0];
  const std::size_t k = shape_size(shape) / m;
  std::vector<double> values;
  values.reserve(m * k);
  env.labels.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    next();
    const auto tokens = split_ws(line);
    if (tokens.size() != k + 1) {
      fail(lineno, "expected " + std::to_string(k + 1) + " fields, found " + std::to_string(tokens.size()));
    }
    long long y;
    if (!parse_int(tokens[0], y)) fail(lineno, "bad label '" + tokens[0] + "'");
    env.labels.push_back(static_cast<int>(y));
    for (std::size_t j = 1; j <= k; ++j) {
      double v;
      if (!parse_double(tokens[j], v)) fail(lineno, "bad value '" + tokens[j] + "'");
      values.push_back(v);
    }
  }
  env.inputs = Tensor(shape, std::move(values));
  return env;
}

void write_environment(const Environment& env, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << environment_to_string(env);
}

Environment read_environment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return environment_from_string(ss.str());
}

}  // namespace perinv
