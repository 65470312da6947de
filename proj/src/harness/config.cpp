#include <fstream>
#include <set>
#include <sstream>

#include "perinv/errors.hpp"
#include "perinv/harness.hpp"
#include "perinv/text.hpp"

namespace perinv {

std::string_view dataset_name(DatasetKind d) {
  switch (d) {
    case DatasetKind::sem_synthetic: return "sem_synthetic";
    case DatasetKind::rc_mnist: return "rc_mnist";
    case DatasetKind::rc_fmnist: return "rc_fmnist";
  }
  return "unknown";
}

namespace {

struct Entry {
  std::size_t line;
  std::string value;
};

class Parser {
 public:
  explicit Parser(std::vector<std::string>& problems) : problems_(problems) {}

  void bad(const std::string& key, const Entry& e, const std::string& what) {
    problems_.push_back(key + " (line " + std::to_string(e.line) + "): " + what);
  }

  std::vector<std::string> items(const Entry& e) {
    std::vector<std::string> out;
    if (trim(e.value).empty()) return out;
    for (const auto& part : split(e.value, ',')) out.emplace_back(trim(part));
    return out;
  }

  template <class T>
  void integer(const std::string& key, const Entry& e, T& out, long long lo = 0) {
    long long v;
    if (!parse_int(trim(e.value), v) || v < lo) return bad(key, e, "expected an integer >= " + std::to_string(lo));
    out = static_cast<T>(v);
  }

  void real(const std::string& key, const Entry& e, double& out) {
    double v;
    if (!parse_double(trim(e.value), v)) return bad(key, e, "expected a number");
    out = v;
  }

  void reals(const std::string& key, const Entry& e, std::vector<double>& out) {
    std::vector<double> v;
    for (const auto& item : items(e)) {
      double d;
      if (!parse_double(item, d)) return bad(key, e, "'" + item + "' is not a number");
      v.push_back(d);
    }
    out = std::move(v);
  }

  template <class T>
  void integers(const std::string& key, const Entry& e, std::vector<T>& out) {
    std::vector<T> v;
    for (const auto& item : items(e)) {
      long long d;
      if (!parse_int(item, d) || d < 0) return bad(key, e, "'" + item + "' is not a non-negative integer");
      v.push_back(static_cast<T>(d));
    }
    out = std::move(v);
  }

  void boolean(const std::string& key, const Entry& e, bool& out) {
    const auto v = trim(e.value);
    if (v == "true") {
      out = true;
    } else if (v == "false") {
      out = false;
    } else {
      bad(key, e, "expected true or false");
    }
  }

 private:
  std::vector<std::string>& problems_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> problems;
  std::vector<std::pair<std::string, Entry>> entries;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const auto line = trim(hash == std::string::npos ? std::string_view(raw) : std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected 'key = value'");
      continue;
    }
    std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) {
      problems.push_back(key + " (line " + std::to_string(lineno) + "): duplicate key");
      continue;
    }
    entries.push_back({key, Entry{lineno, std::string(trim(line.substr(eq + 1)))}});
  }

  ExperimentConfig cfg;
  Parser p(problems);

  // Dataset and client count shape the defaults the remaining keys refine.
  for (const auto& [key, e] : entries) {
    if (key != "dataset") continue;
    if (e.value == "sem_synthetic") {
      cfg.dataset = DatasetKind::sem_synthetic;
    } else if (e.value == "rc_mnist" || e.value == "rc_fmnist") {
      cfg.dataset = e.value == "rc_mnist" ? DatasetKind::rc_mnist : DatasetKind::rc_fmnist;
      cfg.federation = FederationSpec::rc_default();
      cfg.ood_cases = {0.10};
      cfg.hidden = {390, 390};
    } else {
      p.bad(key, e, "unknown dataset '" + e.value + "'");
    }
  }
  for (const auto& [key, e] : entries) {
    if (key != "federation.clients") continue;
    std::size_t n = 0;
    p.integer(key, e, n, 1);
    if (n > 0) {
      auto& clients = cfg.federation.clients;
      const ClientSpec last = clients.back();
      clients.resize(n, last);
    }
  }

  for (const auto& [key, e] : entries) {
    auto& h = cfg.hyper;
    if (key == "dataset" || key == "federation.clients") {
      continue;
    } else if (key == "methods") {
      cfg.methods.clear();
      for (const auto& item : p.items(e)) {
        if (auto m = parse_method(item)) {
          cfg.methods.push_back(*m);
        } else {
          p.bad(key, e, "unknown method '" + item + "'");
        }
      }
    } else if (key == "seeds") {
      p.integers(key, e, cfg.seeds);
    } else if (key == "ood_cases") {
      p.reals(key, e, cfg.ood_cases);
    } else if (key == "output_dir") {
      cfg.output_dir = e.value;
    } else if (key == "data_dir") {
      cfg.data_dir = e.value;
    } else if (key == "model.hidden") {
      p.integers(key, e, cfg.hidden);
    } else if (key == "hyper.T") {
      p.integer(key, e, h.T);
    } else if (key == "hyper.R") {
      p.integer(key, e, h.R);
    } else if (key == "hyper.S") {
      p.integer(key, e, h.S);
    } else if (key == "hyper.beta") {
      p.real(key, e, h.beta);
    } else if (key == "hyper.client_beta") {
      p.reals(key, e, h.client_beta);
    } else if (key == "hyper.eta") {
      p.real(key, e, h.eta);
    } else if (key == "hyper.gamma") {
      p.real(key, e, h.gamma);
    } else if (key == "hyper.alpha") {
      p.real(key, e, h.alpha);
    } else if (key == "hyper.lambda") {
      p.real(key, e, h.lambda);
    } else if (key == "hyper.lambda_warmup_rounds") {
      p.integer(key, e, h.lambda_warmup_rounds);
    } else if (key == "hyper.dro_step") {
      p.real(key, e, h.dro_step);
    } else if (key == "hyper.local_loss") {
      if (e.value == "irm") {
        h.local_loss = LocalLoss::irm;
      } else if (e.value == "groupdro") {
        h.local_loss = LocalLoss::groupdro;
      } else {
        p.bad(key, e, "expected irm or groupdro");
      }
    } else if (key == "hyper.minibatch") {
      p.integer(key, e, h.minibatch);
    } else if (key == "hyper.eval_every") {
      p.integer(key, e, h.eval_every, 1);
    } else if (key == "sem.dim_H") {
      p.integer(key, e, cfg.sem.dim_H, 1);
    } else if (key == "sem.dim_Z") {
      p.integer(key, e, cfg.sem.dim_Z);
    } else if (key == "sem.rho") {
      p.reals(key, e, cfg.sem.rho);
    } else if (key == "sem.noise_std") {
      p.real(key, e, cfg.sem.noise_std);
    } else if (key == "sem.spurious_noise_std") {
      p.real(key, e, cfg.sem.spurious_noise_std);
    } else if (key == "sem.mixing_seed") {
      p.integer(key, e, cfg.sem.mixing_seed);
    } else if (key == "sem.spurious_scale") {
      p.real(key, e, cfg.spurious_scale);
    } else if (key == "rc.noise_rate") {
      p.real(key, e, cfg.rc.noise_rate);
    } else if (key == "rc.downsample") {
      p.boolean(key, e, cfg.rc.downsample);
    } else if (key.starts_with("federation.client")) {
      const auto dot = key.find('.', 17);
      long long idx;
      if (dot == std::string::npos || !parse_int(std::string_view(key).substr(17, dot - 17), idx) || idx < 0) {
        p.bad(key, e, "unknown key");
        continue;
      }
      if (static_cast<std::size_t>(idx) >= cfg.federation.clients.size()) {
        p.bad(key, e, "client index out of range (federation.clients = " +
                          std::to_string(cfg.federation.clients.size()) + ")");
        continue;
      }
      auto& c = cfg.federation.clients[static_cast<std::size_t>(idx)];
      const std::string field = key.substr(dot + 1);
      if (field == "train_p") {
        std::vector<double> ps;
        p.reals(key, e, ps);
        if (ps.empty()) continue;
        const std::size_t samples = c.train.empty() ? 1000 : c.train.front().samples;
        c.train.resize(ps.size(), ContextSpec{0.0, samples});
        for (std::size_t k = 0; k < ps.size(); ++k) c.train[k].p_e = ps[k];
      } else if (field == "train_samples") {
        std::size_t n = 0;
        p.integer(key, e, n, 1);
        for (auto& ctx : c.train) ctx.samples = n;
      } else if (field == "test_samples") {
        p.integer(key, e, c.test_samples, 1);
      } else if (field == "rotation") {
        p.integer(key, e, c.rotation_deg);
      } else if (field == "rho") {
        p.reals(key, e, c.rho);
      } else {
        p.bad(key, e, "unknown key");
      }
    } else {
      p.bad(key, e, "unknown key");
    }
  }

  if (!problems.empty()) throw ValidationError(problems);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError({"cannot open config file " + path.string()});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  if (seeds.empty()) problems.push_back("seeds: at least one seed is required");
  if (methods.empty()) problems.push_back("methods: at least one method is required");
  if (ood_cases.empty()) problems.push_back("ood_cases: at least one case is required");
  for (double p : ood_cases) {
    if (!(p >= 0.0 && p <= 1.0)) problems.push_back("ood_cases: " + format_double(p) + " is outside [0, 1]");
  }
  if (hidden.empty()) problems.push_back("model.hidden: at least one hidden layer is required");
  for (auto w : hidden) {
    if (w == 0) problems.push_back("model.hidden: layer widths must be >= 1");
  }
  try {
    hyper.validate();
  } catch (const ValidationError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!hyper.client_beta.empty() && hyper.client_beta.size() != federation.clients.size()) {
    problems.push_back("hyper.client_beta: expected one entry per client");
  }
  try {
    federation.validate();
  } catch (const Error& e) {
    problems.push_back(std::string("federation: ") + e.what());
  }
  if (dataset == DatasetKind::sem_synthetic) {
    try {
      sem.validate();
    } catch (const Error& e) {
      problems.push_back(std::string("sem: ") + e.what());
    }
    for (std::size_t i = 0; i < federation.clients.size(); ++i) {
      const auto& rho = federation.clients[i].rho;
      if (!rho.empty() && rho.size() != sem.dim_H) {
        problems.push_back("federation.client" + std::to_string(i) + ".rho: expected " +
                           std::to_string(sem.dim_H) + " entries");
      }
    }
    if (!(spurious_scale >= 0.0)) problems.push_back("sem.spurious_scale must be >= 0");
  } else {
    if (data_dir.empty()) problems.push_back("data_dir: required for image datasets");
    if (!(rc.noise_rate >= 0.0 && rc.noise_rate <= 0.5)) problems.push_back("rc.noise_rate must lie in [0, 0.5]");
  }
  if (output_dir.empty()) problems.push_back("output_dir must not be empty");
  if (!problems.empty()) throw ValidationError(problems);
}

ModelArch ExperimentConfig::arch() const {
  ModelArch a;
  a.hidden_dims = hidden;
  if (dataset == DatasetKind::sem_synthetic) {
    a.input_dim = sem.input_dim();
  } else {
    a.input_dim = rc.downsample ? 14 * 14 * 2 : 28 * 28 * 2;
  }
  return a;
}

}  // namespace perinv
