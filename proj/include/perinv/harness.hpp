#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perinv/analysis.hpp"
#include "perinv/data.hpp"
#include "perinv/federation.hpp"
#include "perinv/metrics.hpp"

namespace perinv {

enum class DatasetKind { sem_synthetic, rc_mnist, rc_fmnist };

std::string_view dataset_name(DatasetKind d);

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::sem_synthetic;
  FederationSpec federation = FederationSpec::sem_default();
  SemSpec sem;
  double spurious_scale = 1.0;
  std::filesystem::path data_dir;  // IDX files for the image datasets
  RcOptions rc;
  Hyperparams hyper;
  std::vector<std::size_t> hidden{32};  // 390, 390 for the image datasets
  std::vector<Method> methods{Method::perinvfl};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> ood_cases{0.10, 0.20, 0.30, 0.40, 0.50};
  std::filesystem::path output_dir = "outputs";

  // Throws ValidationError listing every offending key.
  void validate() const;
  // Model shape implied by the dataset and hidden sizes.
  ModelArch arch() const;
};

// Flat "key = value" text; '#' starts a comment, lists are comma separated.
// Unknown keys and malformed values are collected into one ValidationError.
//
//   dataset = sem_synthetic | rc_mnist | rc_fmnist
//   methods = perinvfl, fedavg, irm_dist, groupdro_dist, irm_l2, irm_ft
//   seeds = 0, 1, 2
//   ood_cases = 0.1, 0.2, 0.3, 0.4, 0.5
//   output_dir = outputs
//   data_dir = /path/to/idx            (image datasets)
//   model.hidden = 390, 390
//   hyper.T / R / S / beta / client_beta / eta / gamma / alpha / lambda /
//     lambda_warmup_rounds / dro_step / local_loss (irm | groupdro) / minibatch / eval_every
//   sem.dim_H / dim_Z / rho / noise_std / spurious_noise_std / mixing_seed / spurious_scale
//   rc.noise_rate / rc.downsample
//   federation.clients = <N>              resets the client list to N default clients
//   federation.client<i>.train_p / train_samples / test_samples / rotation / rho
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Client data for one seed, with test environments for every OOD case.
std::vector<ClientData> build_federation(const ExperimentConfig& config, std::uint64_t seed);

struct SummaryRow {
  std::string method;
  std::vector<MeanStd> cases;  // across seeds, per OOD case
  MeanStd average;             // mean and std of the case means
  std::size_t runs = 0;
};

struct Summary {
  std::vector<double> ood_cases;
  std::vector<SummaryRow> rows;
};

// Per-case accuracy of one run: mean over clients at the last logged round.
std::map<std::string, double> final_test_accuracy(const MetricsLog& log);

// Rebuilds the summary from per-run logs alone. Methods keep the given order.
Summary summarize(std::span<const MetricsLog> runs, std::span<const std::string> method_order = {});
// Percent cells "mean (±std)" with two decimals.
std::string format_summary_table(const Summary& summary);
std::string summary_json(const Summary& summary, std::span<const std::string> failures = {});

struct ExperimentResult {
  Summary summary;
  std::vector<std::string> failures;  // "method seed: message" per diverged run
  std::vector<std::filesystem::path> csv_files;
};

// Trains every (method, seed) and evaluates on all OOD cases; writes
// runs/<method>_seed<seed>.csv, summary.txt and summary.json under output_dir.
// PERINV_THREADS caps the worker count.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Recomputes summary.txt / summary.json from the CSVs in dir/runs.
Summary report(const std::filesystem::path& dir);

std::size_t worker_count();

struct GradientProbe {
  std::string name;
  ParamVector at;
  std::function<double(const ParamVector&)> value;
  std::function<ParamVector(const ParamVector&)> gradient;
};

struct GradientCheckConfig {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  double h = 1e-5;
  double tolerance = 1e-4;
};

struct GradientCheckEntry {
  std::string name;
  double relative_error = 0.0;
  bool pass = false;
};

struct GradientReport {
  std::vector<GradientCheckEntry> entries;
  bool pass = true;
  std::vector<std::string> failing;  // names of objectives with at least one failure
};

// risk, irm_loss and local_objective on a one-hidden-layer 8-unit MLP over
// random 8-sample environments, one probe per objective and instance.
std::vector<GradientProbe> default_gradient_probes(const GradientCheckConfig& config);
GradientReport check_gradients(std::span<const GradientProbe> probes, const GradientCheckConfig& config);
GradientReport check_gradients(const GradientCheckConfig& config = {});

std::string format_theorem1(const Theorem1Result& result);

}  // namespace perinv
