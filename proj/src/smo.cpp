#include <algorithm>
#include <cmath>
#include <limits>
#include <list>

#include <fmt/format.h>

#include "pricegrid/svm.hpp"

namespace pricegrid::svm {

namespace {

constexpr double kTau = 1e-12;

// LRU cache of signed kernel rows Q_t. = y_t y_s K(subset[t], subset[s]).
class RowCache {
 public:
  RowCache(const KernelSource& kernel, std::span<const std::size_t> subset, std::span<const int> y,
           std::size_t cache_bytes)
      : kernel_(kernel), subset_(subset), y_(y), n_(subset.size()), slot_of_(n_, kNone) {
    const std::size_t row_bytes = std::max<std::size_t>(1, n_ * sizeof(double));
    capacity_ = std::clamp<std::size_t>(cache_bytes / row_bytes, 2, n_);
    rows_.reserve(capacity_);
  }

  const double* get(std::size_t t) {
    std::size_t slot = slot_of_[t];
    if (slot != kNone) {
      lru_.splice(lru_.begin(), lru_, slot_pos_[slot]);
      return rows_[slot].data();
    }
    if (rows_.size() < capacity_) {
      slot = rows_.size();
      rows_.emplace_back(n_);
      owner_.push_back(t);
      lru_.push_front(slot);
      slot_pos_.push_back(lru_.begin());
    } else {
      slot = lru_.back();
      slot_of_[owner_[slot]] = kNone;
      owner_[slot] = t;
      lru_.splice(lru_.begin(), lru_, slot_pos_[slot]);
    }
    slot_of_[t] = slot;
    auto& row = rows_[slot];
    kernel_.fill_row(subset_[t], subset_, row);
    const double yt = y_[t];
    for (std::size_t s = 0; s < n_; ++s) row[s] *= yt * y_[s];
    return row.data();
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  const KernelSource& kernel_;
  std::span<const std::size_t> subset_;
  std::span<const int> y_;
  std::size_t n_;
  std::size_t capacity_ = 2;
  std::vector<std::vector<double>> rows_;
  std::vector<std::size_t> owner_;
  std::vector<std::size_t> slot_of_;
  std::list<std::size_t> lru_;
  std::vector<std::list<std::size_t>::iterator> slot_pos_;
};

double snap_to_box(double a, double bound) {
  const double slack = 4.0 * std::numeric_limits<double>::epsilon() * bound;
  if (a <= slack) return 0.0;
  if (a >= bound - slack) return bound;
  return a;
}

}  // namespace

double kkt_violation(std::span<const double> alpha, std::span<const double> bounds,
                     std::span<const int> y, std::span<const double> decision) {
  double worst = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double margin = y[i] * decision[i];
    if (alpha[i] < bounds[i]) worst = std::max(worst, 1.0 - margin);
    if (alpha[i] > 0.0) worst = std::max(worst, margin - 1.0);
  }
  return worst;
}

BinaryTrainResult smo_train(const FeatureMatrix& points, const KernelSource& kernel,
                            const KernelSpec& spec, std::span<const std::size_t> subset,
                            std::span<const int> y, double c_pos, double c_neg,
                            const SmoOptions& opts) {
  const std::size_t n = subset.size();
  if (y.size() != n) throw ConfigError("smo_train: label count differs from row count");
  if (n < 2) throw InfeasibleError("smo_train: need at least 2 training rows");
  if (!(c_pos > 0 && c_neg > 0)) throw ConfigError("smo_train: box bounds must be positive");
  if (!(opts.tol > 0)) throw ConfigError("smo_train: tol must be positive");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1)
      has_pos = true;
    else if (v == -1)
      has_neg = true;
    else
      throw ConfigError("smo_train: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw InfeasibleError("smo_train: both classes must be present");

  std::vector<double> bound(n), alpha(n, 0.0), grad(n, -1.0), qd(n);
  for (std::size_t t = 0; t < n; ++t) {
    bound[t] = y[t] > 0 ? c_pos : c_neg;
    qd[t] = kernel.entry(subset[t], subset[t]);
  }
  RowCache cache(kernel, subset, y, opts.cache_bytes);

  // Membership flags for I_up / I_low; only the two updated indices change per step.
  std::vector<unsigned char> up(n), low(n);
  auto set_flags = [&](std::size_t t) {
    up[t] = y[t] > 0 ? alpha[t] < bound[t] : alpha[t] > 0.0;
    low[t] = y[t] > 0 ? alpha[t] > 0.0 : alpha[t] < bound[t];
  };
  for (std::size_t t = 0; t < n; ++t) set_flags(t);

  // i maximizes -y G over I_up; the gap uses the minimum of -y G over I_low.
  double g_max = 0.0, g_min = 0.0;
  std::size_t i = n, j = n;
  auto reset_selection = [&] {
    g_max = -std::numeric_limits<double>::infinity();
    g_min = std::numeric_limits<double>::infinity();
    i = j = n;
  };
  auto consider = [&](std::size_t t) {
    const double v = -y[t] * grad[t];
    if (v > g_max && up[t]) {
      g_max = v;
      i = t;
    }
    if (v < g_min && low[t]) {
      g_min = v;
      j = t;
    }
  };
  reset_selection();
  for (std::size_t t = 0; t < n; ++t) consider(t);

  BinaryTrainResult res;
  std::uint64_t iter = 0;
  double gap = 0.0;
  while (true) {
    gap = (i == n || j == n) ? 0.0 : g_max - g_min;
    if (gap <= opts.tol) break;
    if (iter >= opts.max_iter) {
      res.converged = false;
      break;
    }
    ++iter;

    const double* q_i = cache.get(i);
    if (opts.working_set == WorkingSet::SecondOrder) {
      // Partner with the largest second-order decrease among violating I_low members.
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < n; ++t) {
        if (!low[t]) continue;
        const double diff = g_max + y[t] * grad[t];
        if (diff <= 0) continue;
        double quad = qd[i] + qd[t] - 2.0 * y[i] * y[t] * q_i[t];
        if (quad <= 0) quad = kTau;
        const double obj = -(diff * diff) / quad;
        if (obj < best) {
          best = obj;
          j = t;
        }
      }
    }
    const double* q_j = cache.get(j);
    const double c_i = bound[i], c_j = bound[j];
    const double old_ai = alpha[i], old_aj = alpha[j];
    double ai = old_ai, aj = old_aj;

    if (y[i] != y[j]) {
      double quad = qd[i] + qd[j] + 2.0 * q_i[j];
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0) {
        if (aj < 0) {
          aj = 0;
          ai = diff;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = -diff;
      }
      if (diff > c_i - c_j) {
        if (ai > c_i) {
          ai = c_i;
          aj = c_i - diff;
        }
      } else if (aj > c_j) {
        aj = c_j;
        ai = c_j + diff;
      }
    } else {
      double quad = qd[i] + qd[j] - 2.0 * q_i[j];
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > c_i) {
        if (ai > c_i) {
          ai = c_i;
          aj = sum - c_i;
        }
      } else if (aj < 0) {
        aj = 0;
        ai = sum;
      }
      if (sum > c_j) {
        if (aj > c_j) {
          aj = c_j;
          ai = sum - c_j;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = sum;
      }
    }
    // Clipping arithmetic can leave a value an ulp off its bound, which would count it as free.
    ai = snap_to_box(ai, c_i);
    aj = snap_to_box(aj, c_j);
    alpha[i] = ai;
    alpha[j] = aj;
    set_flags(i);
    set_flags(j);
    const double d_i = ai - old_ai, d_j = aj - old_aj;
    // Gradient update fused with the next selection scan.
    reset_selection();
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += q_i[t] * d_i + q_j[t] * d_j;
      consider(t);
    }
  }

  // Bias: average over free vectors, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= bound[t]) {
      if (y[t] < 0)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (alpha[t] <= 0.0) {
      if (y[t] > 0)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  double rho = 0.0;
  if (n_free > 0)
    rho = sum_free / static_cast<double>(n_free);
  else if (std::isfinite(ub) && std::isfinite(lb))
    rho = (ub + lb) / 2.0;
  else
    rho = std::isfinite(ub) ? ub : lb;
  const double bias = -rho;

  std::vector<double> decision(n);
  double objective = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    decision[t] = y[t] * (grad[t] + 1.0) + bias;
    objective += alpha[t] * (1.0 - grad[t]) / 2.0;
  }

  res.model.kernel = spec;
  res.model.bias = bias;
  res.model.support_vectors = FeatureMatrix(points.cols());
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0.0) continue;
    res.model.support_vectors.push_back(points.row(subset[t]));
    res.model.coeffs.push_back(alpha[t] * y[t]);
    res.model.source_rows.push_back(subset[t]);
  }
  res.dual_objective = objective;
  res.gap = gap;
  res.iterations = iter;
  res.max_kkt_violation = kkt_violation(alpha, bound, y, decision);
  if (!res.converged)
    res.warning = fmt::format("max_iter ({}) reached before KKT satisfaction; violation {}",
                              opts.max_iter, gap);
  res.alpha = std::move(alpha);
  res.bounds = std::move(bound);
  return res;
}

BinaryTrainResult smo_train(const FeatureMatrix& x, std::span<const int> y, double c_pos,
                            double c_neg, const KernelSpec& spec, double tol,
                            std::uint64_t max_iter) {
  PointKernel kernel(x, spec);
  std::vector<std::size_t> subset(x.rows());
  for (std::size_t i = 0; i < subset.size(); ++i) subset[i] = i;
  SmoOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return smo_train(x, kernel, spec, subset, y, c_pos, c_neg, opts);
}

double BinarySvm::decision_value(std::span<const double> x) const {
  if (x.size() != support_vectors.cols())
    throw ConfigError("decision_value: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                      std::to_string(support_vectors.cols()) + ")");
  double f = 0.0;
  for (std::size_t s = 0; s < coeffs.size(); ++s)
    f += coeffs[s] * kernel_eval(kernel, support_vectors.row(s), x);
  return f + bias;
}

double BinarySvm::decision_value_indexed(const KernelSource& source, std::size_t j) const {
  if (source_rows.size() != coeffs.size())
    throw ConfigError("decision_value_indexed: model carries no kernel-source rows");
  double f = 0.0;
  for (std::size_t s = 0; s < coeffs.size(); ++s) f += coeffs[s] * source.entry(source_rows[s], j);
  return f + bias;
}

nlohmann::json BinarySvm::to_json() const {
  nlohmann::json sv = nlohmann::json::array();
  for (std::size_t s = 0; s < support_vectors.rows(); ++s) {
    const auto r = support_vectors.row(s);
    sv.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"kernel", kernel.to_json()},
          {"bias", bias},
          {"positive_class", positive_class},
          {"negative_class", negative_class},
          {"dim", support_vectors.cols()},
          {"coeffs", coeffs},
          {"support_vectors", sv}};
}

BinarySvm BinarySvm::from_json(const nlohmann::json& j) {
  BinarySvm m;
  m.kernel = KernelSpec::from_json(j.at("kernel"));
  m.bias = j.at("bias").get<double>();
  m.positive_class = j.at("positive_class").get<int>();
  m.negative_class = j.at("negative_class").get<int>();
  m.coeffs = j.at("coeffs").get<std::vector<double>>();
  m.support_vectors = FeatureMatrix(j.at("dim").get<std::size_t>());
  for (const auto& row : j.at("support_vectors")) m.support_vectors.push_back(row.get<std::vector<double>>());
  if (m.support_vectors.rows() != m.coeffs.size())
    throw SchemaError("binary svm: support vector and coefficient counts differ");
  return m;
}

}  // namespace pricegrid::svm
