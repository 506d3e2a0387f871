#include <cmath>
#include <set>

#include "pricegrid/svm.hpp"

namespace pricegrid::svm {

namespace {

double dot(std::span<const double> x, std::span<const double> z) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * z[i];
  return s;
}

double sqdist(std::span<const double> x, std::span<const double> z) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - z[i];
    s += d * d;
  }
  return s;
}

double int_pow(double base, int n) {
  double r = 1.0;
  while (n > 0) {
    if (n & 1) r *= base;
    base *= base;
    n >>= 1;
  }
  return r;
}

}  // namespace

std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Linear:
      return "linear";
    case KernelKind::Polynomial:
      return "polynomial";
    case KernelKind::Rbf:
      return "rbf";
    case KernelKind::Sigmoid:
      return "sigmoid";
  }
  return "rbf";
}

KernelKind kernel_kind_from_string(std::string_view s) {
  const std::string k = normalize_key(s);
  if (k == "linear") return KernelKind::Linear;
  if (k == "polynomial" || k == "poly") return KernelKind::Polynomial;
  if (k == "rbf") return KernelKind::Rbf;
  if (k == "sigmoid") return KernelKind::Sigmoid;
  throw ConfigError("unknown kernel '" + std::string(s) + "'");
}

void KernelSpec::validate() const {
  if (uses_gamma() && !(gamma > 0)) throw ConfigError("kernel gamma must be positive");
  if (kind == KernelKind::Polynomial && degree < 1)
    throw ConfigError("polynomial degree must be positive");
}

nlohmann::json KernelSpec::to_json() const {
  nlohmann::json j = {{"kind", std::string(to_string(kind))}};
  if (uses_gamma()) j["gamma"] = gamma;
  if (kind == KernelKind::Polynomial) j["degree"] = degree;
  if (kind == KernelKind::Polynomial || kind == KernelKind::Sigmoid) j["coef0"] = coef0;
  return j;
}

KernelSpec KernelSpec::from_json(const nlohmann::json& j) {
  KernelSpec k;
  k.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  k.gamma = j.value("gamma", 1.0);
  k.degree = j.value("degree", 3);
  k.coef0 = j.value("coef0", 0.0);
  k.validate();
  return k;
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> z) {
  if (x.size() != z.size())
    throw ConfigError("kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                      std::to_string(z.size()) + ")");
  switch (spec.kind) {
    case KernelKind::Linear:
      return dot(x, z);
    case KernelKind::Polynomial:
      return int_pow(spec.gamma * dot(x, z) + spec.coef0, spec.degree);
    case KernelKind::Rbf:
      return std::exp(-spec.gamma * sqdist(x, z));
    case KernelKind::Sigmoid:
      return std::tanh(spec.gamma * dot(x, z) + spec.coef0);
  }
  return 0.0;
}

PointKernel::PointKernel(const FeatureMatrix& points, KernelSpec spec)
    : points_(&points), spec_(spec) {
  spec_.validate();
}

double PointKernel::entry(std::size_t i, std::size_t j) const {
  return kernel_eval(spec_, points_->row(i), points_->row(j));
}

void PointKernel::fill_row(std::size_t i, std::span<const std::size_t> cols,
                           std::span<double> out) const {
  const auto xi = points_->row(i);
  for (std::size_t t = 0; t < cols.size(); ++t) out[t] = kernel_eval(spec_, xi, points_->row(cols[t]));
}

SquaredDistances SquaredDistances::compute(const FeatureMatrix& points, int jobs) {
  SquaredDistances d;
  d.n_ = points.rows();
  d.d_.assign(d.n_ * d.n_, 0.0);
  parallel_for(d.n_, jobs, [&](std::size_t i) {
    const auto xi = points.row(i);
    for (std::size_t j = 0; j < d.n_; ++j) d.d_[i * d.n_ + j] = sqdist(xi, points.row(j));
  });
  return d;
}

DenseGram DenseGram::compute(const FeatureMatrix& points, const KernelSpec& spec, int jobs) {
  spec.validate();
  DenseGram g;
  g.n_ = points.rows();
  g.k_.assign(g.n_ * g.n_, 0.0);
  parallel_for(g.n_, jobs, [&](std::size_t i) {
    const auto xi = points.row(i);
    for (std::size_t j = 0; j < g.n_; ++j) g.k_[i * g.n_ + j] = kernel_eval(spec, xi, points.row(j));
  });
  return g;
}

DenseGram DenseGram::rbf(const SquaredDistances& d2, double gamma, int jobs) {
  if (!(gamma > 0)) throw ConfigError("kernel gamma must be positive");
  DenseGram g;
  g.n_ = d2.size();
  g.k_.assign(g.n_ * g.n_, 0.0);
  parallel_for(g.n_, jobs, [&](std::size_t i) {
    for (std::size_t j = 0; j < g.n_; ++j) g.k_[i * g.n_ + j] = std::exp(-gamma * d2(i, j));
  });
  return g;
}

void DenseGram::fill_row(std::size_t i, std::span<const std::size_t> cols,
                         std::span<double> out) const {
  const double* row = k_.data() + i * n_;
  for (std::size_t t = 0; t < cols.size(); ++t) out[t] = row[cols[t]];
}

std::map<int, double> class_weights(std::span<const int> labels, const WeightMode& mode,
                                    std::span<const int> declared) {
  if (labels.empty()) throw ConfigError("class_weights: no labels");
  std::map<int, std::size_t> counts;
  for (int l : labels) counts[l]++;
  std::set<int> classes(declared.begin(), declared.end());
  if (classes.empty())
    for (const auto& [c, n] : counts) classes.insert(c);

  std::map<int, double> out;
  if (std::holds_alternative<BalancedWeights>(mode)) {
    const double n = static_cast<double>(labels.size());
    const double k = static_cast<double>(classes.size());
    for (int c : classes) {
      auto it = counts.find(c);
      if (it == counts.end())
        throw InfeasibleError("class_weights: class " + std::to_string(c) + " has no samples");
      out[c] = n / (k * static_cast<double>(it->second));
    }
    return out;
  }
  const auto& explicit_map = std::get<std::map<int, double>>(mode);
  for (int c : classes) {
    auto it = explicit_map.find(c);
    if (it == explicit_map.end())
      throw ConfigError("class_weights: no explicit weight for class " + std::to_string(c));
    const double w = it->second;
    if (!(w > 0)) throw ConfigError("class_weights: weight of class " + std::to_string(c) + " must be positive");
    out[c] = w;
  }
  return out;
}

std::string_view to_string(WorkingSet w) {
  return w == WorkingSet::FirstOrder ? "first-order" : "second-order";
}

WorkingSet working_set_from_string(std::string_view s) {
  const std::string k = normalize_key(s);
  if (k == "first-order") return WorkingSet::FirstOrder;
  if (k == "second-order") return WorkingSet::SecondOrder;
  throw ConfigError("unknown working set selection '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(C > 0)) throw ConfigError("C must be positive");
  if (!(tol > 0)) throw ConfigError("tol must be positive");
  if (max_iter == 0) throw ConfigError("max_iter must be positive");
  kernel.validate();
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"C", C}, {"kernel", kernel.to_json()}, {"tol", tol}, {"max_iter", max_iter},
                      {"working_set", std::string(to_string(working_set))}};
  if (std::holds_alternative<BalancedWeights>(class_weights)) {
    j["class_weights"] = "balanced";
  } else {
    nlohmann::json w = nlohmann::json::object();
    for (const auto& [c, v] : std::get<std::map<int, double>>(class_weights)) w[std::to_string(c)] = v;
    j["class_weights"] = w;
  }
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "C") {
      c.C = v.get<double>();
    } else if (key == "kernel") {
      c.kernel = KernelSpec::from_json(v);
    } else if (key == "tol") {
      c.tol = v.get<double>();
    } else if (key == "max_iter") {
      c.max_iter = v.get<std::uint64_t>();
    } else if (key == "working_set") {
      c.working_set = working_set_from_string(v.get<std::string>());
    } else if (key == "cache_bytes") {
      c.cache_bytes = v.get<std::size_t>();
    } else if (key == "class_weights") {
      if (v.is_string()) {
        if (normalize_key(v.get<std::string>()) != "balanced")
          throw ConfigError("class_weights: expected 'balanced' or a class->weight object");
        c.class_weights = BalancedWeights{};
      } else if (v.is_object()) {
        std::map<int, double> w;
        for (const auto& [cls, wv] : v.items()) w[std::stoi(cls)] = wv.get<double>();
        c.class_weights = w;
      } else {
        throw ConfigError("class_weights: expected 'balanced' or a class->weight object");
      }
    } else {
      throw ConfigError(key + ": unknown training option");
    }
  }
  c.validate();
  return c;
}

}  // namespace pricegrid::svm
