#include <CLI11.hpp>
#include <iostream>

#include "perinv/errors.hpp"
#include "perinv/harness.hpp"
#include "perinv/text.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kFailed = 2, kDiverged = 3 };

int cmd_run(const std::string& config_path, const std::string& output_dir) {
  perinv::ExperimentConfig config = perinv::load_config(config_path);
  if (!output_dir.empty()) config.output_dir = output_dir;
  const auto result = perinv::run_experiment(config);
  std::cout << perinv::format_summary_table(result.summary);
  for (const auto& f : result.failures) std::cerr << "diverged: " << f << "\n";
  std::cout << "wrote " << result.csv_files.size() << " run files to " << (config.output_dir / "runs").string()
            << "\n";
  return result.failures.empty() ? kOk : kDiverged;
}

int cmd_check_gradients(std::size_t instances, std::uint64_t seed) {
  perinv::GradientCheckConfig cfg;
  cfg.instances = instances;
  cfg.seed = seed;
  const auto report = perinv::check_gradients(cfg);
  std::map<std::string, double> worst;
  for (const auto& e : report.entries) worst[e.name] = std::max(worst[e.name], e.relative_error);
  for (const auto& [name, err] : worst) {
    std::cout << name << ": max relative error " << perinv::format_double(err)
              << (err <= cfg.tolerance ? " ok" : " FAIL") << "\n";
  }
  std::cout << (report.pass ? "PASS" : "FAIL") << "\n";
  return report.pass ? kOk : kFailed;
}

int cmd_verify_theorem1(const std::string& spec_path) {
  const auto spec = perinv::load_theorem1_spec(spec_path);
  const auto result = perinv::theorem1_gap(spec.clients, spec.joints);
  std::cout << perinv::format_theorem1(result);
  return (result.holds || !result.applicable) ? kOk : kFailed;
}

int cmd_report(const std::string& dir) {
  const auto summary = perinv::report(dir);
  std::cout << perinv::format_summary_table(summary);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized invariant federated learning experiments"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  auto* run = app.add_subcommand("run", "Train and evaluate every configured method and seed");
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--output-dir", output_dir, "Override output_dir from the config");

  std::size_t instances = 20;
  std::uint64_t seed = 0;
  auto* grad = app.add_subcommand("check-gradients", "Compare reverse-mode gradients with finite differences");
  grad->add_option("--instances", instances, "Random instances per objective");
  grad->add_option("--seed", seed, "Base seed");

  std::string spec_path;
  auto* theorem = app.add_subcommand("verify-theorem1", "Check the personalized-invariance information gap");
  theorem->add_option("--spec", spec_path, "Theorem-1 spec file")->required();

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Rebuild the summary table from run CSVs");
  rep->add_option("--dir", report_dir, "Experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kValidation;
  }

  try {
    if (*run) return cmd_run(config_path, output_dir);
    if (*grad) return cmd_check_gradients(instances, seed);
    if (*theorem) return cmd_verify_theorem1(spec_path);
    if (*rep) return cmd_report(report_dir);
  } catch (const perinv::ValidationError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return kValidation;
  } catch (const perinv::DivergenceError& e) {
    std::cerr << e.what() << "\n";
    return kDiverged;
  } catch (const perinv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}
