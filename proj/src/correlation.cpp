#include <algorithm>
#include <cmath>
#include <numeric>

#include "pricegrid/features.hpp"

namespace pricegrid::features {

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double CorrelationReport::at(const std::string& a, const std::string& b) const {
  auto ia = std::find(names.begin(), names.end(), a);
  auto ib = std::find(names.begin(), names.end(), b);
  if (ia == names.end() || ib == names.end())
    throw LookupError(ia == names.end() ? a : b, "correlation report has no column '" +
                                                     (ia == names.end() ? a : b) + "'");
  return matrix[static_cast<std::size_t>(ia - names.begin())][static_cast<std::size_t>(ib - names.begin())];
}

nlohmann::json CorrelationReport::to_json() const {
  return {{"method", method == CorrelationMethod::Pearson ? "pearson" : "spearman"},
          {"names", names},
          {"matrix", matrix},
          {"excluded", excluded},
          {"dropped", dropped},
          {"threshold", threshold}};
}

CorrelationReport correlation_matrix(const std::vector<NamedColumn>& columns,
                                     CorrelationMethod method) {
  if (columns.empty()) throw ConfigError("correlation: no columns");
  const std::size_t rows = columns.front().values.size();
  for (const auto& c : columns)
    if (c.values.size() != rows) throw ConfigError("correlation: column lengths differ");
  if (rows < 2) throw InfeasibleError("correlation: need at least 2 rows");

  CorrelationReport report;
  report.method = method;
  std::vector<std::vector<double>> data;
  for (const auto& c : columns) {
    if (is_constant(c.values)) {
      report.excluded.push_back(c.name);
      continue;
    }
    report.names.push_back(c.name);
    data.push_back(method == CorrelationMethod::Spearman ? average_ranks(c.values) : c.values);
  }
  const std::size_t k = data.size();
  report.matrix.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    report.matrix[i][i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      const double r = pearson(data[i], data[j]);
      report.matrix[i][j] = r;
      report.matrix[j][i] = r;
    }
  }
  return report;
}

std::vector<std::string> prune_correlated(CorrelationReport& report, double threshold,
                                          const std::vector<std::string>& keep_priority) {
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("prune_correlated: threshold must be in (0,1)");
  auto rank = [&](const std::string& name) {
    auto it = std::find(keep_priority.begin(), keep_priority.end(), name);
    return static_cast<std::size_t>(it - keep_priority.begin());
  };
  std::vector<std::size_t> order(report.names.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = rank(report.names[a]), rb = rank(report.names[b]);
    if (ra != rb) return ra < rb;
    return report.names[a] < report.names[b];
  });

  std::vector<std::size_t> kept;
  report.dropped.clear();
  for (std::size_t i : order) {
    const bool redundant = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return std::abs(report.matrix[i][k]) > threshold;
    });
    if (redundant)
      report.dropped.push_back(report.names[i]);
    else
      kept.push_back(i);
  }
  report.threshold = threshold;
  std::vector<std::string> out;
  for (std::size_t i : kept) out.push_back(report.names[i]);
  return out;
}

}  // namespace pricegrid::features
