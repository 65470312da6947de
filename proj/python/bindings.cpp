#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "perinv/errors.hpp"
#include "perinv/harness.hpp"

namespace py = pybind11;
using namespace perinv;

namespace {

py::dict summary_dict(const Summary& s) {
  py::dict out;
  out["ood_cases"] = s.ood_cases;
  py::list rows;
  for (const auto& r : s.rows) {
    py::dict row;
    row["method"] = r.method;
    row["runs"] = r.runs;
    py::list cases;
    for (const auto& c : r.cases) cases.append(py::make_tuple(c.mean, c.std));
    row["cases"] = cases;
    row["average"] = py::make_tuple(r.average.mean, r.average.std);
    rows.append(row);
  }
  out["rows"] = rows;
  out["table"] = format_summary_table(s);
  return out;
}

py::dict theorem1_dict(const Theorem1Result& r) {
  py::dict d;
  d["lhs"] = r.lhs;
  d["rhs"] = r.rhs;
  d["gap"] = r.gap();
  d["p"] = r.p;
  d["delta"] = r.delta;
  d["K"] = r.K;
  d["applicable"] = r.applicable;
  d["degenerate"] = r.degenerate;
  d["holds"] = r.holds;
  d["note"] = r.note;
  d["report"] = format_theorem1(r);
  return d;
}

std::vector<std::uint8_t> as_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

}  // namespace

PYBIND11_MODULE(_perinv, m) {
  m.doc() = "Personalized invariant federated learning: training, checks and analysis";

  static py::exception<Error> base(m, "PerinvError");
  static py::exception<ValidationError> validation(m, "ValidationError", base.ptr());
  static py::exception<DivergenceError> divergence(m, "DivergenceError", base.ptr());
  static py::exception<FormatError> format(m, "FormatError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      std::string msg = "invalid configuration";
      for (const auto& problem : e.problems()) msg += "\n  " + problem;
      py::set_error(validation, msg.c_str());
    } catch (const DivergenceError& e) {
      py::set_error(divergence, e.what());
    } catch (const FormatError& e) {
      py::set_error(format, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("check_config", [](const std::string& text) { parse_config(text); },
        "Parse and validate config text; raises ValidationError listing every bad key.", py::arg("text"));

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::filesystem::path& output_dir) {
        auto cfg = parse_config(config_text);
        cfg.output_dir = output_dir;
        const auto result = [&] {
          py::gil_scoped_release release;
          return perinv::run_experiment(cfg);
        }();
        py::dict d = summary_dict(result.summary);
        d["failures"] = result.failures;
        std::vector<std::string> files;
        for (const auto& f : result.csv_files) files.push_back(f.string());
        d["csv_files"] = files;
        return d;
      },
      py::arg("config_text"), py::arg("output_dir"));

  m.def("report", [](const std::filesystem::path& dir) { return summary_dict(perinv::report(dir)); },
        "Rebuild summary.txt and summary.json from run CSVs.", py::arg("dir"));

  m.def(
      "train",
      [](const std::string& config_text, const std::string& method, std::uint64_t seed) {
        const auto cfg = parse_config(config_text);
        const auto m = parse_method(method);
        if (!m) throw py::value_error("unknown method '" + method + "'");
        TrainConfig tc;
        tc.hyper = cfg.hyper;
        tc.hyper.method = *m;
        tc.arch = cfg.arch();
        tc.seed = seed;
        MetricsLog log;
        {
          py::gil_scoped_release release;
          log = perinv::train(tc, build_federation(cfg, seed)).log;
        }
        py::dict d;
        d["test_accuracy"] = final_test_accuracy(log);
        d["grad_norm_sq"] = log.series("global", "grad_norm_sq");
        d["csv"] = log.to_csv();
        return d;
      },
      "Train one method on one seed of the configured federation.", py::arg("config_text"),
      py::arg("method") = "perinvfl", py::arg("seed") = 0);

  m.def(
      "check_gradients",
      [](std::size_t instances, std::uint64_t seed, double tolerance) {
        GradientCheckConfig cfg;
        cfg.instances = instances;
        cfg.seed = seed;
        cfg.tolerance = tolerance;
        const auto r = perinv::check_gradients(cfg);
        double worst = 0.0;
        for (const auto& e : r.entries) worst = std::max(worst, e.relative_error);
        py::dict d;
        d["pass"] = r.pass;
        d["failing"] = r.failing;
        d["max_relative_error"] = worst;
        d["checks"] = r.entries.size();
        return d;
      },
      py::arg("instances") = 20, py::arg("seed") = 0, py::arg("tolerance") = 1e-4);

  m.def("theorem1_gap", [](const std::string& spec_text) {
    const auto spec = parse_theorem1_spec(spec_text);
    return theorem1_dict(perinv::theorem1_gap(spec.clients, spec.joints));
  }, "Evaluate the information gap of a theorem-1 spec given as text.", py::arg("spec_text"));

  m.def("random_theorem1_spec", [](std::uint64_t seed) { return theorem1_spec_to_string(perinv::random_theorem1_spec(seed)); },
        py::arg("seed"));

  m.def(
      "mutual_information",
      [](const std::vector<std::pair<int, std::vector<int>>>& support, const std::vector<double>& probs,
         const std::vector<std::size_t>& subset) {
        DiscreteJoint j;
        j.num_features = support.empty() ? 0 : support.front().second.size();
        for (const auto& [y, x] : support) j.support.push_back({y, x});
        j.probs = probs;
        return mutual_information_exact(j, subset);
      },
      "I(Y; X_subset) in nats for a joint given as [(y, x_tuple)] outcomes and probabilities.", py::arg("support"),
      py::arg("probs"), py::arg("subset"));

  m.def("convergence_slope", [](const std::vector<double>& s) { return perinv::convergence_slope(s); },
        py::arg("series"));

  m.def(
      "groupdro_update",
      [](const std::vector<double>& q, const std::vector<double>& risks, double step) {
        return groupdro_update_q(GroupWeights{q}, risks, step).q;
      },
      py::arg("q"), py::arg("risks"), py::arg("step"));

  m.def("parse_idx_labels", [](const py::bytes& b) { return perinv::parse_idx_labels(as_bytes(b)); },
        py::arg("data"));

  m.def(
      "parse_idx_images",
      [](const py::bytes& b) {
        const auto img = perinv::parse_idx_images(as_bytes(b));
        py::array_t<std::uint8_t> out({img.count, img.rows, img.cols});
        std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
        return out;
      },
      "Raw uint8 pixels shaped (count, rows, cols).", py::arg("data"));
}
