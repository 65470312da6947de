#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "perinv/errors.hpp"
#include "perinv/harness.hpp"
#include "perinv/text.hpp"

namespace perinv {

namespace {

ImageSource load_image_source(const std::filesystem::path& dir) {
  ImageSource source;
  for (const char* part : {"train", "t10k"}) {
    const auto images = dir / (std::string(part) + "-images-idx3-ubyte");
    const auto labels = dir / (std::string(part) + "-labels-idx1-ubyte");
    if (!std::filesystem::exists(images) || !std::filesystem::exists(labels)) {
      if (std::string(part) == "train") throw FormatError("missing " + images.string() + " or " + labels.string());
      continue;
    }
    const IdxImages img = parse_idx_images(read_file_bytes(images));
    const std::vector<int> lab = parse_idx_labels(read_file_bytes(labels));
    if (lab.size() != img.count) throw FormatError(images.string() + ": image and label counts differ");
    if (source.images.count == 0) {
      source.images = img;
    } else {
      if (img.rows != source.images.rows || img.cols != source.images.cols) {
        throw FormatError(images.string() + ": image size differs from the training file");
      }
      source.images.pixels.insert(source.images.pixels.end(), img.pixels.begin(), img.pixels.end());
      source.images.count += img.count;
    }
    source.digits.insert(source.digits.end(), lab.begin(), lab.end());
  }
  return source;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

std::vector<std::string> canonical_order() {
  std::vector<std::string> order;
  for (Method m : {Method::perinvfl, Method::fedavg, Method::irm_dist, Method::groupdro_dist, Method::irm_l2,
                   Method::irm_ft}) {
    order.emplace_back(method_name(m));
  }
  return order;
}

double case_of(const std::string& split) {
  double p = 0.0;
  parse_double(std::string_view(split).substr(5), p);
  return p;
}

}  // namespace

std::vector<ClientData> build_federation(const ExperimentConfig& config, std::uint64_t seed) {
  FederationSpec spec = config.federation;
  spec.test_p = config.ood_cases;
  if (config.dataset == DatasetKind::sem_synthetic) {
    return sem_federation(spec, config.sem, config.spurious_scale, seed);
  }
  return partition_clients(spec, load_image_source(config.data_dir), seed, config.rc);
}

std::map<std::string, double> final_test_accuracy(const MetricsLog& log) {
  int last = -1;
  for (const auto& r : log.rows()) last = std::max(last, r.round);
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& r : log.rows()) {
    if (r.round != last || r.metric != "accuracy" || !r.split.starts_with("test@") || r.client < 0) continue;
    auto& [total, count] = acc[r.split];
    total += r.value;
    ++count;
  }
  std::map<std::string, double> out;
  for (const auto& [split, tc] : acc) out[split] = tc.first / tc.second;
  return out;
}

Summary summarize(std::span<const MetricsLog> runs, std::span<const std::string> method_order) {
  std::vector<std::string> methods(method_order.begin(), method_order.end());
  std::map<std::string, std::vector<std::map<std::string, double>>> per_method;
  std::map<std::string, double> cases;
  for (const auto& log : runs) {
    if (log.empty()) continue;
    const std::string& m = log.rows().front().method;
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    auto acc = final_test_accuracy(log);
    for (const auto& [split, v] : acc) cases[split] = case_of(split);
    per_method[m].push_back(std::move(acc));
  }
  Summary summary;
  std::vector<std::string> splits;
  for (const auto& [split, p] : cases) {
    splits.push_back(split);
    summary.ood_cases.push_back(p);
  }
  for (const auto& m : methods) {
    auto it = per_method.find(m);
    if (it == per_method.end()) continue;
    SummaryRow row;
    row.method = m;
    row.runs = it->second.size();
    std::vector<double> case_means;
    for (const auto& split : splits) {
      std::vector<double> values;
      for (const auto& run : it->second) {
        if (auto f = run.find(split); f != run.end()) values.push_back(f->second);
      }
      row.cases.push_back(mean_std(values));
      case_means.push_back(row.cases.back().mean);
    }
    row.average = mean_std(case_means);
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

std::string format_summary_table(const Summary& summary) {
  const auto cell = [](const MeanStd& ms) {
    return format_fixed(100.0 * ms.mean, 2) + " (±" + format_fixed(100.0 * ms.std, 2) + ")";
  };
  std::string out = "| method |";
  for (double p : summary.ood_cases) out += " p=" + format_fixed(p, 2) + " |";
  out += " Average |\n|---|";
  for (std::size_t k = 0; k <= summary.ood_cases.size(); ++k) out += "---|";
  out += "\n";
  for (const auto& row : summary.rows) {
    out += "| " + row.method + " |";
    for (const auto& c : row.cases) out += " " + cell(c) + " |";
    out += " " + cell(row.average) + " |\n";
  }
  return out;
}

std::string summary_json(const Summary& summary, std::span<const std::string> failures) {
  nlohmann::ordered_json j;
  j["ood_cases"] = summary.ood_cases;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : summary.rows) {
    nlohmann::ordered_json r;
    r["method"] = row.method;
    r["runs"] = row.runs;
    r["cases"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < row.cases.size(); ++k) {
      r["cases"].push_back({{"p_test", summary.ood_cases[k]}, {"mean", row.cases[k].mean}, {"std", row.cases[k].std}});
    }
    r["average"] = {{"mean", row.average.mean}, {"std", row.average.std}};
    j["rows"].push_back(std::move(r));
  }
  j["failures"] = std::vector<std::string>(failures.begin(), failures.end());
  return j.dump(2) + "\n";
}

std::size_t worker_count() {
  if (const char* env = std::getenv("PERINV_THREADS")) {
    long long n;
    if (parse_int(env, n) && n >= 1) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto runs_dir = config.output_dir / "runs";
  std::filesystem::create_directories(runs_dir);

  struct Task {
    Method method;
    std::uint64_t seed;
    MetricsLog log;
    std::string failure;
    std::exception_ptr error;
  };
  std::vector<Task> tasks;
  for (Method m : config.methods) {
    for (auto s : config.seeds) tasks.push_back({m, s, {}, {}, nullptr});
  }

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      Task& task = tasks[k];
      TrainConfig tc;
      tc.hyper = config.hyper;
      tc.hyper.method = task.method;
      tc.arch = config.arch();
      tc.seed = task.seed;
      try {
        const auto clients = build_federation(config, task.seed);
        task.log = train(tc, clients).log;
      } catch (const DivergenceError& e) {
        task.failure = e.what();
      } catch (...) {
        task.error = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(worker_count(), tasks.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& task : tasks) {
    if (task.error) std::rethrow_exception(task.error);
  }

  ExperimentResult result;
  std::vector<MetricsLog> logs;
  for (auto& task : tasks) {
    const std::string stem = std::string(method_name(task.method)) + "_seed" + std::to_string(task.seed);
    if (!task.failure.empty()) {
      result.failures.push_back(stem + ": " + task.failure);
      continue;
    }
    const auto path = runs_dir / (stem + ".csv");
    write_text(path, task.log.to_csv());
    result.csv_files.push_back(path);
    logs.push_back(std::move(task.log));
  }
  result.summary = summarize(logs, canonical_order());
  write_text(config.output_dir / "summary.txt", format_summary_table(result.summary));
  write_text(config.output_dir / "summary.json", summary_json(result.summary, result.failures));
  return result;
}

Summary report(const std::filesystem::path& dir) {
  const auto runs_dir = dir / "runs";
  if (!std::filesystem::is_directory(runs_dir)) throw FormatError("no runs directory under " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MetricsLog> logs;
  for (const auto& f : files) logs.push_back(MetricsLog::from_csv(read_text(f)));
  Summary summary = summarize(logs, canonical_order());
  std::vector<std::string> failures;
  if (std::filesystem::exists(dir / "summary.json")) {
    const auto j = nlohmann::json::parse(read_text(dir / "summary.json"), nullptr, false);
    if (!j.is_discarded() && j.contains("failures")) failures = j["failures"].get<std::vector<std::string>>();
  }
  write_text(dir / "summary.txt", format_summary_table(summary));
  write_text(dir / "summary.json", summary_json(summary, failures));
  return summary;
}

}  // namespace perinv
