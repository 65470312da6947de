#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace perinv {

struct MetricRow {
  std::string method;
  std::uint64_t seed = 0;
  int round = 0;
  int client = -1;  // -1 for server-level rows
  std::string split;
  std::string metric;
  double value = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

// Append-only per-run metrics. Rows are produced in (seed, round, client) order.
class MetricsLog {
 public:
  static constexpr std::string_view kCsvHeader = "method,seed,round,client,split,metric,value";

  void append(MetricRow row) { rows_.push_back(std::move(row)); }
  void append_all(const MetricsLog& other);
  const std::vector<MetricRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  std::string to_csv() const;
  static MetricsLog from_csv(std::string_view text);

  // Values of one (split, metric, client) series in round order.
  std::vector<double> series(std::string_view split, std::string_view metric, int client = -1) const;

 private:
  std::vector<MetricRow> rows_;
};

}  // namespace perinv
