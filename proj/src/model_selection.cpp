#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "pricegrid/eval.hpp"
#include "pricegrid/labeling.hpp"

namespace pricegrid::eval {

using svm::KernelSource;
using svm::KernelSpec;
using svm::TrainConfig;

std::vector<std::size_t> FoldPlan::train_rows(int f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] != f) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::test_rows(int f) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i)
    if (fold[i] == f) out.push_back(i);
  return out;
}

nlohmann::json FoldPlan::to_json() const { return {{"k", k}, {"seed", seed}, {"fold", fold}}; }

FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("stratified_kfold: k must be at least 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold.assign(labels.size(), 0);
  for (auto& [cls, members] : by_class) {
    if (members.size() < static_cast<std::size_t>(k))
      throw InfeasibleError(fmt::format("stratified_kfold: class {} has {} rows, fewer than k = {}", cls,
                                        members.size(), k));
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t t = 0; t < members.size(); ++t)
      plan.fold[members[t]] = static_cast<int>(t % static_cast<std::size_t>(k));
  }
  return plan;
}

namespace {

// One fold of CV over `rows` (indices into points / kernel); plan indexes positions in `rows`.
double run_fold(const FeatureMatrix& points, const KernelSource* kernel,
                std::span<const std::size_t> rows, std::span<const int> labels,
                const TrainConfig& config, const FoldPlan& plan, int f, svm::TrainStats* stats) {
  svm::TrainingSet data;
  data.points = &points;
  data.kernel = kernel;
  std::size_t n_test = 0, hit = 0;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (plan.fold[t] == f) continue;
    data.rows.push_back(rows[t]);
    data.labels.push_back(labels[t]);
  }
  const auto model = svm::train_multiclass(data, config);
  if (stats) *stats = model.stats;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (plan.fold[t] != f) continue;
    const int pred = kernel ? model.predict_indexed(*kernel, rows[t]) : model.predict(points.row(rows[t]));
    hit += pred == labels[t];
    ++n_test;
  }
  return static_cast<double>(hit) / static_cast<double>(n_test);
}

void mean_variance(const std::vector<double>& v, double& mean, double& var) {
  mean = 0.0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  var = 0.0;
  for (double a : v) var += (a - mean) * (a - mean);
  var /= static_cast<double>(v.size());
}

CvResult cv_on_rows(const FeatureMatrix& points, const KernelSource* kernel,
                    std::span<const std::size_t> rows, std::span<const int> labels,
                    const TrainConfig& config, const FoldPlan& plan, int jobs) {
  if (plan.fold.size() != rows.size()) throw ConfigError("cross_validate: fold plan does not match rows");
  CvResult res;
  res.fold_accuracy.assign(static_cast<std::size_t>(plan.k), 0.0);
  std::vector<svm::TrainStats> stats(static_cast<std::size_t>(plan.k));
  parallel_for(static_cast<std::size_t>(plan.k), jobs, [&](std::size_t f) {
    try {
      res.fold_accuracy[f] =
          run_fold(points, kernel, rows, labels, config, plan, static_cast<int>(f), &stats[f]);
    } catch (const FoldError&) {
      throw;
    } catch (const std::exception& e) {
      throw FoldError(static_cast<int>(f), e.what());
    }
  });
  mean_variance(res.fold_accuracy, res.mean, res.variance);
  for (const auto& s : stats) {
    res.stats.binary_problems += s.binary_problems;
    res.stats.not_converged += s.not_converged;
    res.stats.iterations += s.iterations;
    res.stats.max_kkt_violation = std::max(res.stats.max_kkt_violation, s.max_kkt_violation);
  }
  return res;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

CvResult cross_validate(const FeatureMatrix& x, std::span<const int> labels, const TrainConfig& config,
                        const FoldPlan& plan, const KernelSource* kernel, int jobs) {
  if (labels.size() != x.rows()) throw ConfigError("cross_validate: row and label counts differ");
  config.validate();
  const auto rows = iota_rows(x.rows());
  return cv_on_rows(x, kernel, rows, labels, config, plan, jobs);
}

std::string_view to_string(GridStage s) { return s == GridStage::Coarse ? "coarse" : "fine"; }

GridSpec GridSpec::paper_fine() {
  GridSpec g;
  g.extra_fine_C = {6500.0};
  g.extra_fine_gamma = {0.01};
  return g;
}

std::vector<double> GridSpec::coarse_values() const {
  std::vector<double> v;
  for (int e = min_exponent; e <= max_exponent; ++e) v.push_back(std::pow(10.0, e));
  return v;
}

void GridSpec::validate() const {
  if (kernels.empty()) throw ConfigError("grid: no kernels requested");
  if (min_exponent > max_exponent) throw ConfigError("grid: empty coarse exponent range");
  if (fine_multipliers.empty()) throw ConfigError("grid: no fine multipliers");
  for (double m : fine_multipliers)
    if (!(m > 0)) throw ConfigError("grid: fine multipliers must be positive");
  for (double c : extra_fine_C)
    if (!(c > 0)) throw ConfigError("grid: extra C values must be positive");
  for (double g : extra_fine_gamma)
    if (!(g > 0)) throw ConfigError("grid: extra gamma values must be positive");
  if (folds < 2) throw ConfigError("grid: folds must be at least 2");
}

nlohmann::json GridSpec::to_json() const {
  std::vector<std::string> names;
  for (auto k : kernels) names.emplace_back(svm::to_string(k));
  return {{"kernels", names},
          {"min_exponent", min_exponent},
          {"max_exponent", max_exponent},
          {"fine_multipliers", fine_multipliers},
          {"extra_fine_C", extra_fine_C},
          {"extra_fine_gamma", extra_fine_gamma},
          {"folds", folds},
          {"degree", degree},
          {"coef0", coef0}};
}

GridSpec GridSpec::from_json(const nlohmann::json& j) {
  GridSpec g;
  for (const auto& [key, v] : j.items()) {
    if (key == "preset") {
      const auto name = normalize_key(v.get<std::string>());
      if (name == "paper-fine") {
        g.extra_fine_C = paper_fine().extra_fine_C;
        g.extra_fine_gamma = paper_fine().extra_fine_gamma;
      } else if (name != "default") {
        throw ConfigError("grid: unknown preset '" + v.get<std::string>() + "'");
      }
    }
  }
  for (const auto& [key, v] : j.items()) {
    if (key == "preset") continue;
    if (key == "kernels") {
      g.kernels.clear();
      for (const auto& k : v) g.kernels.push_back(svm::kernel_kind_from_string(k.get<std::string>()));
    } else if (key == "min_exponent") {
      g.min_exponent = v.get<int>();
    } else if (key == "max_exponent") {
      g.max_exponent = v.get<int>();
    } else if (key == "fine_multipliers") {
      g.fine_multipliers = v.get<std::vector<double>>();
    } else if (key == "extra_fine_C") {
      g.extra_fine_C = v.get<std::vector<double>>();
    } else if (key == "extra_fine_gamma") {
      g.extra_fine_gamma = v.get<std::vector<double>>();
    } else if (key == "folds") {
      g.folds = v.get<int>();
    } else if (key == "degree") {
      g.degree = v.get<int>();
    } else if (key == "coef0") {
      g.coef0 = v.get<double>();
    } else {
      throw ConfigError(key + ": unknown grid option");
    }
  }
  g.validate();
  return g;
}

std::optional<std::size_t> select_best(const std::vector<GridCell>& cells) {
  std::optional<std::size_t> best;
  auto better = [](const GridCell& a, const GridCell& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    if (a.C != b.C) return a.C < b.C;
    if (a.kernel.gamma != b.kernel.gamma) return a.kernel.gamma < b.kernel.gamma;
    return static_cast<int>(a.kernel.kind) < static_cast<int>(b.kernel.kind);
  };
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].error) continue;
    if (!best || better(cells[i], cells[*best])) best = i;
  }
  return best;
}

namespace {

struct CellKey {
  KernelSpec kernel;
  std::vector<double> Cs;
};

// Evaluates every (kernel, C) cell. One Gram matrix per kernel spec is shared by its C values.
std::vector<GridCell> evaluate_cells(const FeatureMatrix& x, std::span<const int> labels,
                                     const TrainConfig& base, const std::vector<CellKey>& groups,
                                     const FoldPlan& plan, int jobs,
                                     std::unique_ptr<svm::SquaredDistances>& d2,
                                     const std::vector<GridCell>& known = {}) {
  auto find_known = [&](const KernelSpec& kernel, double C) -> const GridCell* {
    for (const auto& c : known)
      if (c.kernel == kernel && c.C == C) return &c;
    return nullptr;
  };
  std::vector<GridCell> cells;
  const auto rows = iota_rows(x.rows());
  const auto k = static_cast<std::size_t>(plan.k);
  for (const auto& g : groups) {
    std::vector<const GridCell*> reused(g.Cs.size());
    bool all_known = true;
    for (std::size_t c = 0; c < g.Cs.size(); ++c) {
      reused[c] = find_known(g.kernel, g.Cs[c]);
      all_known = all_known && reused[c];
    }
    if (all_known) {
      for (const auto* r : reused) cells.push_back(*r);
      continue;
    }
    svm::DenseGram gram;
    if (g.kernel.kind == svm::KernelKind::Rbf) {
      if (!d2) d2 = std::make_unique<svm::SquaredDistances>(svm::SquaredDistances::compute(x, jobs));
      gram = svm::DenseGram::rbf(*d2, g.kernel.gamma, jobs);
    } else {
      gram = svm::DenseGram::compute(x, g.kernel, jobs);
    }
    const std::size_t n_tasks = g.Cs.size() * k;
    std::vector<double> acc(n_tasks, 0.0);
    std::vector<svm::TrainStats> stats(n_tasks);
    std::vector<std::optional<std::string>> errors(n_tasks);
    parallel_for(n_tasks, jobs, [&](std::size_t t) {
      if (reused[t / k]) return;
      TrainConfig cfg = base;
      cfg.C = g.Cs[t / k];
      cfg.kernel = g.kernel;
      const int f = static_cast<int>(t % k);
      try {
        acc[t] = run_fold(x, &gram, rows, labels, cfg, plan, f, &stats[t]);
      } catch (const std::exception& e) {
        errors[t] = fmt::format("fold {}: {}", f, e.what());
      }
    });
    for (std::size_t c = 0; c < g.Cs.size(); ++c) {
      if (reused[c]) {
        cells.push_back(*reused[c]);
        continue;
      }
      GridCell cell;
      cell.kernel = g.kernel;
      cell.C = g.Cs[c];
      for (std::size_t f = 0; f < k; ++f) {
        const std::size_t t = c * k + f;
        if (errors[t] && !cell.error) cell.error = errors[t];
        cell.fold_accuracy.push_back(acc[t]);
        cell.iterations += stats[t].iterations;
        cell.not_converged += stats[t].not_converged;
      }
      if (!cell.error) mean_variance(cell.fold_accuracy, cell.mean, cell.variance);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

KernelSpec make_kernel(svm::KernelKind kind, double gamma, const GridSpec& spec) {
  KernelSpec k;
  k.kind = kind;
  k.gamma = kind == svm::KernelKind::Linear ? 1.0 : gamma;
  k.degree = kind == svm::KernelKind::Linear ? 1 : spec.degree;
  k.coef0 = spec.coef0;
  if (kind == svm::KernelKind::Rbf) {
    k.degree = 3;
    k.coef0 = 0.0;
  }
  return k;
}

}  // namespace

GridSearchResult grid_search(const FeatureMatrix& x, std::span<const int> labels, const TrainConfig& base,
                             const GridSpec& spec, std::uint64_t seed, int jobs) {
  spec.validate();
  base.validate();
  if (labels.size() != x.rows()) throw ConfigError("grid_search: row and label counts differ");
  GridSearchResult res;
  res.plan = stratified_kfold(labels, spec.folds, seed);
  std::unique_ptr<svm::SquaredDistances> d2;

  const auto values = spec.coarse_values();
  std::vector<CellKey> coarse;
  for (auto kind : spec.kernels) {
    if (kind == svm::KernelKind::Linear) {
      coarse.push_back({make_kernel(kind, 1.0, spec), values});
    } else {
      for (double g : values) coarse.push_back({make_kernel(kind, g, spec), values});
    }
  }
  res.coarse.stage = GridStage::Coarse;
  res.coarse.cells = evaluate_cells(x, labels, base, coarse, res.plan, jobs, d2);
  res.coarse.best = select_best(res.coarse.cells);
  if (!res.coarse.best) throw InfeasibleError("grid_search: every coarse cell failed");

  const GridCell& winner = res.coarse.cells[*res.coarse.best];
  std::vector<double> fine_C = spec.extra_fine_C;
  for (double m : spec.fine_multipliers) fine_C.push_back(winner.C * m);
  fine_C = sorted_unique(fine_C);
  std::vector<CellKey> fine;
  if (winner.kernel.kind == svm::KernelKind::Linear) {
    fine.push_back({winner.kernel, fine_C});
  } else {
    std::vector<double> fine_g = spec.extra_fine_gamma;
    for (double m : spec.fine_multipliers) fine_g.push_back(winner.kernel.gamma * m);
    for (double g : sorted_unique(fine_g)) fine.push_back({make_kernel(winner.kernel.kind, g, spec), fine_C});
  }
  res.fine.stage = GridStage::Fine;
  res.fine.cells = evaluate_cells(x, labels, base, fine, res.plan, jobs, d2, res.coarse.cells);
  res.fine.best = select_best(res.fine.cells);

  const GridCell& chosen = res.fine.best ? res.fine.cells[*res.fine.best] : winner;
  res.best = base;
  res.best.C = chosen.C;
  res.best.kernel = chosen.kernel;
  return res;
}

nlohmann::json GridSearchReport::to_json() const {
  nlohmann::json cj = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json j = {{"kernel", c.kernel.to_json()},
                        {"C", c.C},
                        {"mean_accuracy", c.mean},
                        {"variance", c.variance},
                        {"fold_accuracy", c.fold_accuracy},
                        {"iterations", c.iterations},
                        {"not_converged", c.not_converged}};
    if (c.error) j["error"] = *c.error;
    cj.push_back(std::move(j));
  }
  nlohmann::json j = {{"stage", std::string(eval::to_string(stage))}, {"cells", cj}};
  j["best"] = best ? nlohmann::json(*best) : nlohmann::json(nullptr);
  return j;
}

std::vector<double> default_curve_fractions() {
  std::vector<double> f;
  for (int i = 1; i <= 10; ++i) f.push_back(i / 10.0);
  return f;
}

LearningCurve learning_curve(const FeatureMatrix& x, std::span<const int> labels, const TrainConfig& config,
                             const std::vector<double>& fractions, std::uint64_t seed, int folds, int jobs) {
  config.validate();
  if (labels.size() != x.rows()) throw ConfigError("learning_curve: row and label counts differ");
  if (fractions.empty()) throw ConfigError("learning_curve: no fractions");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0 && fractions[i] <= 1)) throw ConfigError("learning_curve: fractions must lie in (0, 1]");
    if (i > 0 && !(fractions[i] > fractions[i - 1]))
      throw ConfigError("learning_curve: fractions must be ascending");
  }
  const auto gram = svm::DenseGram::compute(x, config.kernel, jobs);
  LearningCurve curve;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double frac = fractions[i];
    std::vector<std::size_t> rows;
    if (frac >= 1.0) {
      rows = iota_rows(x.rows());
    } else {
      try {
        rows = labeling::stratified_split_indices(labels, frac, derive_seed(seed, i)).train;
      } catch (const InfeasibleError& e) {
        throw InfeasibleError(fmt::format("learning_curve: fraction {} too small: {}", frac, e.what()));
      }
    }
    std::vector<int> sub_labels(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) sub_labels[t] = labels[rows[t]];

    svm::TrainingSet data;
    data.points = &x;
    data.kernel = &gram;
    data.rows = rows;
    data.labels = sub_labels;
    const auto model = svm::train_multiclass(data, config, jobs);
    std::size_t hit = 0;
    for (std::size_t t = 0; t < rows.size(); ++t) hit += model.predict_indexed(gram, rows[t]) == sub_labels[t];

    FoldPlan plan;
    try {
      plan = stratified_kfold(sub_labels, folds, derive_seed(seed, 1000 + i));
    } catch (const InfeasibleError& e) {
      throw InfeasibleError(fmt::format("learning_curve: fraction {} too small: {}", frac, e.what()));
    }
    const auto cv = cv_on_rows(x, &gram, rows, sub_labels, config, plan, jobs);

    CurvePoint p;
    p.fraction = frac;
    p.n_train = rows.size();
    p.train_accuracy = static_cast<double>(hit) / static_cast<double>(rows.size());
    p.cv_accuracy = cv.mean;
    p.cv_variance = cv.variance;
    curve.points.push_back(p);
  }
  return curve;
}

nlohmann::json LearningCurve::to_json() const {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& p : points)
    pj.push_back({{"fraction", p.fraction},
                  {"n_train", p.n_train},
                  {"train_accuracy", p.train_accuracy},
                  {"cv_accuracy", p.cv_accuracy},
                  {"cv_variance", p.cv_variance}});
  return {{"points", pj}};
}

}  // namespace pricegrid::eval
