// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <fmt/format.h>

#include "pricegrid/eval.hpp"
#include "pricegrid/features.hpp"
#include "pricegrid/labeling.hpp"
#include "pricegrid/pipeline.hpp"
#include "pricegrid/svm.hpp"
#include "support/qp_oracle.hpp"
#include "support/svm_checks.hpp"

using namespace pricegrid;
namespace fs = std::filesystem;

namespace {

constexpr double kEps = 2.220446049250313e-16;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every KKT check made by criteria 1 and 2 lands here.
struct KktLedger {
  std::size_t runs = 0, failures = 0;
  double worst_violation = 0.0, worst_equality = 0.0;
  std::size_t exact_zero = 0;
  std::string first_failure;

  void add(const checks::KktReport& r, double tol, bool converged) {
    ++runs;
    worst_violation = std::max(worst_violation, r.violation);
    worst_equality = std::max(worst_equality, r.equality);
    exact_zero += r.equality == 0.0;
    if (!r.ok(tol) || !converged) {
      if (failures++ == 0)
        first_failure = fmt::format("run {}: violation {:.3g}, |sum a y| {:.3g}, box {}, converged {}", runs,
                                    r.violation, r.equality, r.box, converged);
    }
  }
};

KktLedger kkt_ledger;

Eigen::MatrixXd gram(const FeatureMatrix& x, const svm::KernelSpec& spec) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = svm::kernel_eval(spec, x.row(i), x.row(j));
  return k;
}

svm::BinaryTrainResult train_binary(const FeatureMatrix& x, std::span<const int> y, double c_pos, double c_neg,
                                    const svm::KernelSpec& spec, svm::WorkingSet ws = svm::WorkingSet::FirstOrder,
                                    double tol = 1e-3) {
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), 0);
  svm::PointKernel kernel(x, spec);
  svm::SmoOptions opts;
  opts.working_set = ws;
  opts.tol = tol;
  auto r = svm::smo_train(x, kernel, spec, rows, y, c_pos, c_neg, opts);
  kkt_ledger.add(checks::kkt_report(r, x, y), 1e-3, r.converged);
  return r;
}

// -- 1 ---------------------------------------------------------------------------

Outcome smo_vs_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> log_c(std::log(0.1), std::log(100.0));
  std::uniform_real_distribution<double> gamma(0.1, 4.0);
  double worst_obj = 0.0;
  std::size_t sign_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 11, dims = 1 + rng() % 4;
    const auto x = checks::random_points(rng, n, dims);
    const auto y = checks::random_signs(rng, n);
    const double c = std::exp(log_c(rng));
    const auto spec = trial % 2 ? svm::KernelSpec::linear() : svm::KernelSpec::rbf(gamma(rng));
    // the stopping tolerance bounds objective accuracy, so match the oracle at a tight one
    const auto r = train_binary(x, y, c, c, spec, svm::WorkingSet::FirstOrder, 1e-6);

    Eigen::VectorXd yv(n), cv = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), c);
    for (std::size_t i = 0; i < n; ++i) yv[i] = y[i];
    const auto ref = oracle::solve(gram(x, spec), yv, cv);
    worst_obj = std::max(worst_obj, std::abs(r.dual_objective - ref.objective));
    o.require(std::abs(r.dual_objective - ref.objective) <= 1e-4,
              fmt::format("trial {}: objective {} vs oracle {}", trial, r.dual_objective, ref.objective));
    for (std::size_t i = 0; i < n; ++i) {
      const double f = r.model.decision_value(x.row(i));
      if ((f > 0) != (ref.decision[i] > 0) || (f < 0) != (ref.decision[i] < 0)) {
        ++sign_mismatch;
        o.require(false, fmt::format("trial {} row {}: decision {} vs oracle {}", trial, i, f, ref.decision[i]));
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs <= 60.0, fmt::format("runtime {:.1f}s", secs));
  if (o.pass)
    o.detail = fmt::format("200 datasets, max |objective diff| {:.2e}, sign mismatches {}, {:.1f}s", worst_obj,
                           sign_mismatch, secs);
  return o;
}

// -- 2 ---------------------------------------------------------------------------

Outcome kkt_suite() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> log_c(std::log(0.1), std::log(1000.0));
  const svm::KernelSpec kernels[] = {svm::KernelSpec::rbf(0.5), svm::KernelSpec::rbf(5.0), svm::KernelSpec::linear()};
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 20 + rng() % 181, dims = 1 + rng() % 5;
    const auto x = checks::random_points(rng, n, dims);
    const auto y = checks::random_signs(rng, n);
    const double c = std::exp(log_c(rng));
    const double ratio = trial % 3 == 0 ? 1.0 : 0.25 + (rng() % 100) / 25.0;
    train_binary(x, y, c, c * ratio, kernels[trial % 3],
                 trial % 2 ? svm::WorkingSet::SecondOrder : svm::WorkingSet::FirstOrder);
  }

  // multiclass: every pair problem, checked from the solver's bookkeeping and the stored coefficients
  std::size_t multiclass_runs = 0, multiclass_bad = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int k = 3 + trial % 5;
    std::vector<int> labels;
    for (int i = 0; i < 30 * k; ++i) labels.push_back(static_cast<int>(rng() % k));
    const auto x = checks::blobs(rng, labels, 2, 0.6);
    svm::TrainConfig cfg;
    cfg.C = std::pow(10.0, static_cast<double>(trial % 4) - 1.0);
    cfg.kernel = svm::KernelSpec::rbf(1.0);
    const auto m = svm::train_multiclass(x, labels, cfg);
    ++multiclass_runs;
    multiclass_bad += !checks::multiclass_ok(m, cfg.tol) || m.stats.not_converged > 0;
  }

  Outcome o;
  o.require(kkt_ledger.failures == 0, kkt_ledger.first_failure);
  o.require(multiclass_bad == 0, fmt::format("{} of {} multiclass models failed", multiclass_bad, multiclass_runs));
  o.detail += fmt::format("{}{} binary runs + {} multiclass, worst violation {:.2e}, worst |sum a y| {:.2e} "
                          "({} exactly 0)",
                          o.detail.empty() ? "" : "; ", kkt_ledger.runs, multiclass_runs, kkt_ledger.worst_violation,
                          kkt_ledger.worst_equality, kkt_ledger.exact_zero);
  return o;
}

// -- 3 ---------------------------------------------------------------------------

Outcome metric_identities() {
  Outcome o;
  const double f1 = eval::f1_score(0.71, 0.80);
  o.require(std::abs(f1 - 0.7523) <= 5e-4, fmt::format("F1(0.71, 0.80) = {}", f1));
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 6;
    const std::size_t n = 1 + rng() % 400;
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % k);
      pred[i] = rng() % 3 ? truth[i] : static_cast<int>(rng() % k);
    }
    const auto r = eval::evaluate_predictions(truth, pred);
    for (double v : {r.micro_precision, r.micro_recall, r.micro_f1}) worst = std::max(worst, std::abs(v - r.accuracy));
  }
  o.require(worst <= 4 * kEps, fmt::format("micro vs accuracy gap {}", worst));
  if (o.pass) o.detail = fmt::format("F1(0.71, 0.80) = {:.6f}; 100 confusions, max gap {:.1e}", f1, worst);
  return o;
}

// -- 4 / 5 -----------------------------------------------------------------------

std::vector<double> lognormal(std::uint64_t seed, std::size_t n, double mu, double sigma) {
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> d(mu, sigma);
  std::vector<double> v(n);
  for (double& p : v) p = d(rng);
  return v;
}

Outcome binning_shares() {
  Outcome o;
  const double want[] = {25, 25, 25, 6.25, 6.25, 6.25, 6.25};
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto prices = lognormal(400 + trial, 10000, 2.5 + 0.4 * trial, 0.6 + 0.2 * trial);
    const auto bins = labeling::fit_bins(prices);
    std::vector<double> count(labeling::kNumPriceClasses);
    for (double p : prices) count[labeling::assign_class(p, bins).cls.value]++;
    for (int c = 0; c < 7; ++c) {
      const double dev = std::abs(100.0 * count[c] / 10000.0 - want[c]);
      worst = std::max(worst, dev);
      o.require(dev <= 1.0, fmt::format("trial {} class {}: share {}%", trial, c, 100.0 * count[c] / 10000.0));
    }
  }
  const auto us = labeling::PriceBinning::preset(Region::US);
  for (auto [price, cls] : {std::pair{10.0, 0}, {21.2, 2}, {500.0, 6}}) {
    const int got = labeling::assign_class(price, us).cls.value;
    o.require(got == cls, fmt::format("US preset: {} -> {}", price, got));
  }
  if (o.pass) o.detail = fmt::format("5 samples of 10000, worst share deviation {:.2f} points; 10->0 21.2->2 500->6", worst);
  return o;
}

Outcome quantile_baseline() {
  Outcome o;
  std::string seen;
  for (std::size_t n : {10000u, 20000u, 50000u}) {
    const auto prices = lognormal(n, n, 3.2, 1.0);
    const auto bins = labeling::fit_bins(prices);
    std::vector<int> labels;
    for (double p : prices) labels.push_back(labeling::assign_class(p, bins).cls.value);
    const double b = eval::baseline_accuracy(labels);
    o.require(std::abs(b - 0.25) <= 0.01, fmt::format("n={}: baseline {}", n, b));
    seen += fmt::format("{}n={}: {:.4f}", seen.empty() ? "" : ", ", n, b);
  }
  if (o.pass) o.detail = seen;
  return o;
}

// -- 6 ---------------------------------------------------------------------------

Outcome roc_checks() {
  Outcome o;
  const std::vector<int> pos{1, 1, 0, 0, 0};
  o.require(eval::roc_binary(std::vector<double>{5, 4, 3, 2, 1}, pos).auc == 1.0, "perfect ranking");
  const double flat = eval::roc_binary(std::vector<double>(5, 0.3), pos).auc;
  o.require(std::abs(flat - 0.5) <= 1e-9, fmt::format("constant scores: {}", flat));
  const double four = eval::roc_binary(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<int>{1, 0, 1, 0}).auc;
  o.require(four == 0.75, fmt::format("four-point example: {}", four));

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + trial;
    std::vector<double> s(n), cubed(n);
    std::vector<int> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = i % 2 == 0 || i == 1;
      s[i] = std::round(u(rng) * 8) / 8 + 0.5 * p[i];
      cubed[i] = s[i] * s[i] * s[i];
    }
    const double a = eval::roc_binary(s, p).auc, b = eval::roc_binary(cubed, p).auc;
    o.require(a == b, fmt::format("trial {}: auc {} vs {} after cubing", trial, a, b));
  }
  if (o.pass) o.detail = "perfect 1.0, constant 0.5, four-point 0.75, cube invariance on 100 score sets";
  return o;
}

// -- 7 / 8 -----------------------------------------------------------------------

struct PipelineRun {
  fs::path dir;
  int jobs = 1;
  double seconds = 0.0;
  std::string error;
};

PipelineRun run_pipeline(const fs::path& dir, int jobs) {
  PipelineRun run{dir, jobs};
  fs::remove_all(dir);
  pipeline::PipelineOptions opts;
  opts.synth = ingest::SynthConfig::defaults(Region::US);
  opts.synth.n_listings = 5000;
  opts.synth.seed = 7;
  opts.seed = 7;
  opts.jobs = jobs;
  opts.grid.kernels = {svm::KernelKind::Rbf};
  opts.grid.folds = 5;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    pipeline::run_pipeline(opts, pipeline::load_catalog(std::nullopt, std::nullopt, std::nullopt),
                           pipeline::OutputDir(dir));
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  return run;
}

int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::optional<PipelineRun> first_run;

const PipelineRun& pipeline_run() {
  if (!first_run) first_run = run_pipeline(fs::absolute("acceptance_work/run_a"), default_jobs());
  return *first_run;
}

Outcome end_to_end() {
  Outcome o;
  const auto& run = pipeline_run();
  if (!run.error.empty()) {
    o.require(false, "pipeline failed: " + run.error);
    return o;
  }
  const auto report = nlohmann::json::parse(slurp(run.dir / "eval.json"));
  const double acc = report.at("accuracy").get<double>(), base = report.at("baseline_accuracy").get<double>();
  o.require(acc >= 0.45, fmt::format("test accuracy {}", acc));
  o.require(base <= 0.26, fmt::format("baseline {}", base));
  for (const char* key : {"micro_precision", "micro_recall", "micro_f1"})
    o.require(std::abs(report.at(key).get<double>() - acc) <= 4 * kEps, std::string(key) + " differs from accuracy");
  const auto dedup = nlohmann::json::parse(slurp(run.dir / "dedup.json"));
  const auto removed = dedup.at("dedup_removed").get<long long>();
  o.require(removed >= 0, "dedup count");
  const auto best = nlohmann::json::parse(slurp(run.dir / "best_config.json"));
  o.require(best.at("kernel").at("kind") == "rbf", "best kernel is not rbf");
  o.require(run.seconds <= 600.0, fmt::format("wall clock {:.0f}s > 600s with --jobs {}", run.seconds, run.jobs));
  o.detail += fmt::format("{}accuracy {:.4f}, baseline {:.4f}, dedup removed {}, C={} gamma={}, {:.0f}s with {} job(s)",
                          o.detail.empty() ? "" : "; ", acc, base, removed, best.at("C").get<double>(),
                          best.at("kernel").at("gamma").get<double>(), run.seconds, run.jobs);
  return o;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

Outcome determinism() {
  Outcome o;
  const auto& a = pipeline_run();
  const int other_jobs = a.jobs == 1 ? 2 : 1;
  const auto b = run_pipeline(fs::absolute("acceptance_work/run_b"), other_jobs);
  o.require(a.error.empty() && b.error.empty(), "pipeline failed: " + a.error + b.error);
  if (!o.pass) return o;
  const auto fa = tree(a.dir), fb = tree(b.dir);
  std::set<std::string> names;
  for (const auto& [k, v] : fa) names.insert(k);
  for (const auto& [k, v] : fb) names.insert(k);
  std::size_t manifests = 0;
  for (const auto& name : names) {
    const auto ia = fa.find(name), ib = fb.find(name);
    o.require(ia != fa.end() && ib != fb.end(), name + " missing from one run");
    if (ia == fa.end() || ib == fb.end()) continue;
    o.require(ia->second == ib->second, name + " differs");
    manifests += name.rfind("manifest_", 0) == 0;
  }
  o.require(fa.count("model.json") == 1, "no model.json written");
  if (o.pass)
    o.detail = fmt::format("{} files ({} manifests) byte-identical across --jobs {} and --jobs {}", names.size(),
                           manifests, a.jobs, b.jobs);
  return o;
}

// -- 9 ---------------------------------------------------------------------------

Outcome kmeans_checks() {
  Outcome o;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::size_t fits = 0, iterations = 0;
  double worst_mean = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 20 + rng() % 300, k = 1 + trial % 9;
    std::vector<features::GeoPoint> pts(n);
    for (auto& p : pts) {
      const int blob = static_cast<int>(rng() % 5);
      p = {35.0 + 3 * blob + 2 * g(rng), -100.0 + 7 * blob + 4 * g(rng)};
    }
    const auto r = features::kmeans_fit(pts, k, 1000 + trial, 4, 1 + trial % 2);
    ++fits;
    iterations += r.inertia_history.size();
    for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
      o.require(r.inertia_history[i] <= r.inertia_history[i - 1],
                fmt::format("trial {}: inertia rose at iteration {}", trial, i));
    if (k == 1) {
      double lat = 0, lon = 0;
      for (const auto& p : pts) {
        lat += p.lat;
        lon += p.lon;
      }
      lat /= static_cast<double>(n);
      lon /= static_cast<double>(n);
      const auto& c = r.model.centroids.at(0);
      const double dev = std::max(std::abs(c.lat - lat), std::abs(c.lon - lon));
      worst_mean = std::max(worst_mean, dev);
      o.require(dev <= 1e-9, fmt::format("trial {}: K=1 centroid off the mean by {}", trial, dev));
    }
  }
  if (o.pass)
    o.detail = fmt::format("{} fits, {} Lloyd iterations monotone, K=1 mean error {:.1e}", fits, iterations, worst_mean);
  return o;
}

// -- 10 --------------------------------------------------------------------------

Outcome rating_pruning() {
  Outcome o;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> avg(1.0, 5.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  const std::vector<std::string> names{"avg_rating", "communication_rating", "quality_rating", "service_rating",
                                       "speed_rating"};
  std::vector<features::NamedColumn> cols;
  for (const auto& nm : names) cols.push_back({nm, {}});
  for (int i = 0; i < 2000; ++i) {
    const double a = avg(rng);
    cols[0].values.push_back(a);
    for (std::size_t c = 1; c < cols.size(); ++c) cols[c].values.push_back(a + noise(rng));
  }
  // listed in reverse so the result cannot come from column order
  std::reverse(cols.begin(), cols.end());
  auto report = features::correlation_matrix(cols, features::CorrelationMethod::Spearman);
  double weakest = 1.0;
  for (const auto& a : names)
    for (const auto& b : names)
      if (a != b) weakest = std::min(weakest, std::abs(report.at(a, b)));
  o.require(weakest > 0.9, fmt::format("weakest pairwise |spearman| {}", weakest));
  const auto kept = features::prune_correlated(report, 0.9);
  o.require(kept == std::vector<std::string>{"avg_rating"}, fmt::format("kept {} columns", kept.size()));
  o.require(report.dropped.size() == 4, "four sub-ratings dropped");
  if (o.pass) o.detail = fmt::format("weakest |spearman| {:.4f}; kept {{avg_rating}}, dropped 4", weakest);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, smo_vs_oracle},     {2, kkt_suite},  {3, metric_identities}, {4, binning_shares},
      {5, quantile_baseline}, {6, roc_checks}, {7, end_to_end},        {8, determinism},
      {9, kmeans_checks},     {10, rating_pruning}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << fmt::format("criterion {:>2}: {}  {}", id, o.pass ? "PASS" : "FAIL", o.detail) << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
