#include "perinv/metrics.hpp"

#include "perinv/errors.hpp"
#include "perinv/text.hpp"

namespace perinv {

void MetricsLog::append_all(const MetricsLog& other) {
  rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

std::string MetricsLog::to_csv() const {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : rows_) {
    out += r.method;
    out += ',' + std::to_string(r.seed);
    out += ',' + std::to_string(r.round);
    out += ',' + std::to_string(r.client);
    out += ',' + r.split;
    out += ',' + r.metric;
    out += ',' + format_double(r.value);
    out += '\n';
  }
  return out;
}

MetricsLog MetricsLog::from_csv(std::string_view text) {
  MetricsLog log;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (lineno == 1) {
      if (line != kCsvHeader) throw FormatError("metrics CSV: unexpected header '" + std::string(line) + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw FormatError("metrics CSV line " + std::to_string(lineno) + ": expected 7 fields");
    long long seed, round, client;
    double value;
    if (!parse_int(f[1], seed) || !parse_int(f[2], round) || !parse_int(f[3], client) ||
        !parse_double(f[6], value)) {
      throw FormatError("metrics CSV line " + std::to_string(lineno) + ": malformed number");
    }
    log.append(MetricRow{f[0], static_cast<std::uint64_t>(seed), static_cast<int>(round),
                         static_cast<int>(client), f[4], f[5], value});
  }
  return log;
}

std::vector<double> MetricsLog::series(std::string_view split_name, std::string_view metric, int client) const {
  std::vector<double> out;
  for (const auto& r : rows_) {
    if (r.split == split_name && r.metric == metric && r.client == client) out.push_back(r.value);
  }
  return out;
}

}  // namespace perinv
