#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <doctest.h>

#include "pricegrid/eval.hpp"
#include "support/svm_checks.hpp"

using namespace pricegrid;
using namespace pricegrid::eval;

namespace {

std::vector<int> repeat_classes(std::initializer_list<std::pair<int, int>> counts) {
  std::vector<int> out;
  for (auto [cls, n] : counts)
    for (int i = 0; i < n; ++i) out.push_back(cls);
  return out;
}

svm::TrainConfig rbf(double c, double gamma) {
  svm::TrainConfig cfg;
  cfg.C = c;
  cfg.kernel = svm::KernelSpec::rbf(gamma);
  return cfg;
}

/// Labels from the sign of x0 + x1, flipped with probability `noise`.
std::vector<int> noisy_halfplane(std::mt19937_64& rng, const FeatureMatrix& x, double noise) {
  std::bernoulli_distribution flip(noise);
  std::vector<int> y(x.rows());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int clean = x.row(i)[0] + x.row(i)[1] > 0 ? 1 : 0;
    y[i] = flip(rng) ? 1 - clean : clean;
  }
  return y;
}

}  // namespace

// -- metrics -------------------------------------------------------------------

TEST_CASE("f1 of a published class row") {
  CHECK(f1_score(0.71, 0.80) == doctest::Approx(0.752317880794702).epsilon(1e-12));
  CHECK(std::abs(f1_score(0.71, 0.80) - 0.7523) <= 5e-4);
  CHECK(f1_score(0.0, 0.0) == 0.0);
  CHECK(f1_score(1.0, 1.0) == 1.0);
}

TEST_CASE("baseline accuracy") {
  CHECK(baseline_accuracy(std::vector<int>{4, 4, 4}) == 1.0);
  CHECK(baseline_accuracy(repeat_classes({{0, 5}, {1, 3}, {2, 2}})) == doctest::Approx(0.5));
  CHECK(baseline_accuracy(repeat_classes({{0, 40}, {1, 40}, {2, 40}, {3, 10}, {4, 10}, {5, 10}, {6, 10}})) ==
        doctest::Approx(0.25));
  CHECK_THROWS_AS(baseline_accuracy(std::vector<int>{}), ConfigError);
}

TEST_CASE("perfect predictions") {
  const auto truth = repeat_classes({{0, 3}, {1, 4}, {2, 5}});
  const auto r = evaluate_predictions(truth, truth);
  CHECK(r.accuracy == 1.0);
  for (const auto& m : r.per_class) {
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) CHECK(r.confusion[i][j] == 0);
}

TEST_CASE("confusion and metric properties on random predictions") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 6;
    const std::size_t n = 5 + rng() % 200;
    std::uniform_int_distribution<int> cls(0, k - 1);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = cls(rng);
      pred[i] = (rng() % 3 == 0) ? truth[i] : cls(rng);
    }
    std::vector<int> classes(k);
    for (int c = 0; c < k; ++c) classes[c] = c;
    const auto r = evaluate_predictions(truth, pred, classes);
    CHECK(r.micro_precision == r.accuracy);
    CHECK(r.micro_recall == r.accuracy);
    CHECK(r.micro_f1 == r.accuracy);

    std::size_t total = 0, diag = 0;
    for (int i = 0; i < k; ++i) {
      std::size_t row = 0, col = 0;
      for (int j = 0; j < k; ++j) {
        row += r.confusion[i][j];
        col += r.confusion[j][i];
      }
      total += row;
      diag += r.confusion[i][i];
      CHECK(row == static_cast<std::size_t>(std::count(truth.begin(), truth.end(), i)));
      CHECK(col == static_cast<std::size_t>(std::count(pred.begin(), pred.end(), i)));
      const auto& m = r.per_class[i];
      CHECK(m.precision >= 0);
      CHECK(m.precision <= 1);
      CHECK(m.recall >= 0);
      CHECK(m.recall <= 1);
      CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-15);
      CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-15);
    }
    CHECK(total == n);
    CHECK(r.accuracy == static_cast<double>(diag) / static_cast<double>(n));
  }
}

TEST_CASE("never-predicted class gets zero precision with a diagnostic") {
  const std::vector<int> truth{0, 1, 2, 2}, pred{0, 1, 1, 1};
  const auto r = evaluate_predictions(truth, pred);
  CHECK(r.per_class[2].precision == 0.0);
  CHECK(r.per_class[2].recall == 0.0);
  CHECK_FALSE(r.diagnostics.empty());
  CHECK(r.baseline == 0.5);
  CHECK_THROWS_AS(evaluate_predictions(truth, std::vector<int>{0}), ConfigError);
  CHECK_THROWS_AS(evaluate_predictions(truth, pred, std::vector<int>{0, 1}), ConfigError);
}

// -- ROC -----------------------------------------------------------------------

TEST_CASE("roc on the four-point example") {
  // thresholds 0.9, 0.8, 0.3, 0.1 -> (0,.5) (.5,.5) (.5,1) (1,1); area = .25 + .5
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> pos{1, 0, 1, 0};
  const auto r = roc_binary(s, pos);
  CHECK(r.auc == 0.75);
  REQUIRE(r.points.size() == 5);
  CHECK(r.points.front().fpr == 0.0);
  CHECK(r.points.front().tpr == 0.0);
  CHECK(std::isinf(r.points.front().threshold));
  CHECK(r.points.back().fpr == 1.0);
  CHECK(r.points.back().tpr == 1.0);
}

TEST_CASE("roc edge cases and transform invariance") {
  const std::vector<int> pos{1, 1, 0, 0, 0};
  CHECK(roc_binary(std::vector<double>{5, 4, 3, 2, 1}, pos).auc == 1.0);
  CHECK(std::abs(roc_binary(std::vector<double>(5, 0.3), pos).auc - 0.5) <= 1e-9);
  CHECK_THROWS_AS(roc_binary(std::vector<double>{1, 2}, std::vector<int>{1, 1}), InfeasibleError);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 10 + trial;
    std::vector<double> s(n), cubed(n);
    std::vector<int> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = i % 3 == 0;
      s[i] = std::round((g(rng) + p[i]) * 4) / 4;  // coarse grid produces ties
      cubed[i] = s[i] * s[i] * s[i];
    }
    const auto a = roc_binary(s, p), b = roc_binary(cubed, p);
    CHECK(a.auc == b.auc);
    CHECK(a.auc >= 0);
    CHECK(a.auc <= 1);
    for (std::size_t i = 1; i < a.points.size(); ++i) {
      CHECK(a.points[i].fpr >= a.points[i - 1].fpr);
      CHECK(a.points[i].tpr >= a.points[i - 1].tpr);
    }
  }
}

TEST_CASE("per-class and pooled curves") {
  const std::vector<int> classes{0, 1, 2};
  const std::vector<int> labels{0, 1, 2, 0, 1};
  const std::vector<std::vector<double>> scores{
      {2, -1, -1}, {-1, 2, -1}, {-1, -1, 2}, {1, 0, -2}, {0, 1, -2}};
  const auto r = roc_curves(scores, labels, classes);
  CHECK(r.classes.size() == 3);
  CHECK(r.micro.name == "micro");
  CHECK(r.micro.auc == 1.0);
  const auto csv = roc_csv(r);
  CHECK(csv.find("\n0,") != std::string::npos);
  CHECK(csv.find("\nmicro,") != std::string::npos);

  const std::vector<int> classes4{0, 1, 2, 3};
  std::vector<std::vector<double>> s4;
  for (const auto& row : scores) {
    auto v = row;
    v.push_back(0.0);
    s4.push_back(v);
  }
  const auto skipped = roc_curves(s4, labels, classes4);
  CHECK(skipped.classes.size() == 3);
  CHECK(skipped.diagnostics.size() == 1);
}

// -- folds and cross-validation -------------------------------------------------

TEST_CASE("stratified folds") {
  const auto even = repeat_classes({{0, 25}, {1, 25}, {2, 25}, {3, 25}});
  const auto plan = stratified_kfold(even, 5, 3);
  for (int f = 0; f < 5; ++f) {
    std::map<int, int> counts;
    for (std::size_t r : plan.test_rows(f)) counts[even[r]]++;
    for (int c = 0; c < 4; ++c) CHECK(counts[c] == 5);
    CHECK(plan.train_rows(f).size() + plan.test_rows(f).size() == even.size());
  }
  CHECK(stratified_kfold(even, 5, 3).fold == plan.fold);

  const auto odd = repeat_classes({{0, 23}, {1, 7}});
  const auto p23 = stratified_kfold(odd, 5, 1);
  std::vector<int> sizes(5);
  for (std::size_t r = 0; r < odd.size(); ++r)
    if (odd[r] == 0) sizes[p23.fold[r]]++;
  CHECK(sizes == std::vector<int>{5, 5, 5, 4, 4});

  CHECK_THROWS_AS(stratified_kfold(repeat_classes({{0, 10}, {1, 4}}), 5, 1), InfeasibleError);
}

TEST_CASE("fold plans partition rows with balanced class counts") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<int> labels;
    const int k = 2 + trial % 5;
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < k + static_cast<int>(rng() % 30); ++i) labels.push_back(c);
    std::shuffle(labels.begin(), labels.end(), rng);
    const auto plan = stratified_kfold(labels, k, rng());
    std::set<std::size_t> seen;
    for (int f = 0; f < k; ++f)
      for (std::size_t r : plan.test_rows(f)) CHECK(seen.insert(r).second);
    CHECK(seen.size() == labels.size());
    for (int c = 0; c < 4; ++c) {
      std::vector<int> per(k);
      for (std::size_t r = 0; r < labels.size(); ++r)
        if (labels[r] == c) per[plan.fold[r]]++;
      CHECK(*std::max_element(per.begin(), per.end()) - *std::min_element(per.begin(), per.end()) <= 1);
    }
  }
}

TEST_CASE("separable data gives perfect cross-validation") {
  std::mt19937_64 rng(1);
  const auto labels = repeat_classes({{0, 20}, {1, 20}, {2, 20}});
  const auto x = checks::blobs(rng, labels, 2, 0.05);
  const auto cv = cross_validate(x, labels, rbf(10.0, 1.0), stratified_kfold(labels, 5, 2));
  CHECK(cv.mean == 1.0);
  CHECK(cv.variance == 0.0);
  CHECK(cv.stats.max_kkt_violation <= 1e-3);
}

TEST_CASE("identical inputs predict the majority class in every fold") {
  // All rows equal: each pair decision is its bias, which sides with the larger class.
  const auto labels = repeat_classes({{0, 30}, {1, 18}, {2, 12}});
  const FeatureMatrix x(2, std::vector<double>(labels.size() * 2, 0.5));
  auto cfg = rbf(1.0, 1.0);
  cfg.class_weights = std::map<int, double>{{0, 1.0}, {1, 1.0}, {2, 1.0}};
  const auto plan = stratified_kfold(labels, 5, 4);
  const auto cv = cross_validate(x, labels, cfg, plan);

  double expected = 0.0;
  std::vector<double> per_fold;
  for (int f = 0; f < 5; ++f) {
    std::map<int, int> train_counts;
    for (std::size_t r : plan.train_rows(f)) train_counts[labels[r]]++;
    const int majority = std::max_element(train_counts.begin(), train_counts.end(), [](auto a, auto b) {
                           return a.second < b.second;
                         })->first;
    const auto test = plan.test_rows(f);
    double hits = 0;
    for (std::size_t r : test) hits += labels[r] == majority;
    per_fold.push_back(hits / test.size());
    expected += per_fold.back() / 5;
  }
  CHECK(cv.fold_accuracy == per_fold);
  CHECK(cv.mean == doctest::Approx(expected).epsilon(1e-12));

  double var = 0.0;
  for (double a : per_fold) var += (a - expected) * (a - expected) / 5;
  CHECK(cv.variance == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("fold failures carry the fold index") {
  const auto labels = repeat_classes({{0, 10}, {1, 10}});
  const FeatureMatrix x(1, std::vector<double>(20, 1.0));
  auto cfg = rbf(1.0, 1.0);
  cfg.class_weights = std::map<int, double>{{0, 1.0}};  // no weight for class 1
  try {
    cross_validate(x, labels, cfg, stratified_kfold(labels, 2, 1));
    FAIL("no error");
  } catch (const FoldError& e) {
    CHECK(e.fold() == 0);
  }
}

// -- grid search ----------------------------------------------------------------

TEST_CASE("coarse values span nine decades") {
  GridSpec g;
  const auto v = g.coarse_values();
  REQUIRE(v.size() == 9);
  CHECK(v.front() == doctest::Approx(1e-4));
  CHECK(v.back() == doctest::Approx(1e4));
  const auto p = GridSpec::paper_fine();
  CHECK(std::find(p.extra_fine_C.begin(), p.extra_fine_C.end(), 6500.0) != p.extra_fine_C.end());
  CHECK(std::find(p.extra_fine_gamma.begin(), p.extra_fine_gamma.end(), 0.01) != p.extra_fine_gamma.end());
  CHECK(GridSpec::from_json(p.to_json()).to_json() == p.to_json());
  CHECK_THROWS_AS(GridSpec::from_json(nlohmann::json{{"fold", 3}}), ConfigError);
}

TEST_CASE("tie rule prefers smaller C then smaller gamma") {
  std::vector<GridCell> cells(4);
  cells[0].C = 10;
  cells[0].kernel = svm::KernelSpec::rbf(1);
  cells[1].C = 1;
  cells[1].kernel = svm::KernelSpec::rbf(2);
  cells[2].C = 1;
  cells[2].kernel = svm::KernelSpec::rbf(0.5);
  cells[3].C = 0.1;
  cells[3].kernel = svm::KernelSpec::rbf(0.1);
  for (auto& c : cells) c.mean = 0.8;
  cells[3].error = "failed";
  CHECK(select_best(cells) == 2u);
  cells[0].mean = 0.81;
  CHECK(select_best(cells) == 0u);
  for (auto& c : cells) c.error = "failed";
  CHECK_FALSE(select_best(cells).has_value());
}

TEST_CASE("single cell grid") {
  std::mt19937_64 rng(2);
  const auto labels = repeat_classes({{0, 15}, {1, 15}});
  const auto x = checks::blobs(rng, labels, 2, 0.5);
  GridSpec g;
  g.min_exponent = g.max_exponent = 0;
  g.fine_multipliers = {1.0};
  const auto r = grid_search(x, labels, svm::TrainConfig{}, g, 5);
  CHECK(r.coarse.cells.size() == 1);
  CHECK(r.coarse.best == 0u);
  CHECK(r.best.C == 1.0);
  CHECK(r.best.kernel.gamma == 1.0);
}

TEST_CASE("fine stage on noisy data picks the exhaustive winner instead of the largest C") {
  std::mt19937_64 rng(23);
  const auto x = checks::random_points(rng, 80, 2);
  const auto labels = noisy_halfplane(rng, x, 0.2);
  GridSpec g;
  g.min_exponent = -1;
  g.max_exponent = 3;
  const auto r = grid_search(x, labels, svm::TrainConfig{}, g, 9);
  REQUIRE(r.fine.best.has_value());

  double max_c = 0;
  for (const auto& c : r.fine.cells) max_c = std::max(max_c, c.C);
  CHECK(r.best.C < max_c);

  // every fine cell recomputed independently through cross_validate
  std::size_t best = 0;
  std::vector<double> means;
  for (const auto& cell : r.fine.cells) {
    svm::TrainConfig cfg;
    cfg.C = cell.C;
    cfg.kernel = cell.kernel;
    means.push_back(cross_validate(x, labels, cfg, r.plan).mean);
  }
  for (std::size_t i = 1; i < means.size(); ++i) {
    const auto& a = r.fine.cells[i];
    const auto& b = r.fine.cells[best];
    if (means[i] > means[best] ||
        (means[i] == means[best] && (a.C < b.C || (a.C == b.C && a.kernel.gamma < b.kernel.gamma))))
      best = i;
  }
  for (std::size_t i = 0; i < means.size(); ++i) CHECK(r.fine.cells[i].mean == doctest::Approx(means[i]).epsilon(1e-12));
  CHECK(r.fine.best == best);
}

TEST_CASE("grid reports do not depend on the job count") {
  std::mt19937_64 rng(3);
  const auto x = checks::random_points(rng, 60, 2);
  const auto labels = noisy_halfplane(rng, x, 0.1);
  GridSpec g;
  g.min_exponent = -1;
  g.max_exponent = 1;
  g.fine_multipliers = {0.5, 1, 2};
  const auto a = grid_search(x, labels, svm::TrainConfig{}, g, 4, 1);
  const auto b = grid_search(x, labels, svm::TrainConfig{}, g, 4, 3);
  CHECK(a.coarse.to_json().dump() == b.coarse.to_json().dump());
  CHECK(a.fine.to_json().dump() == b.fine.to_json().dump());
  CHECK(grid_csv(a.coarse, a.fine) == grid_csv(b.coarse, b.fine));
}

// -- learning curve -------------------------------------------------------------

TEST_CASE("learning curve end point equals full training accuracy") {
  std::mt19937_64 rng(19);
  const auto x = checks::random_points(rng, 100, 2);
  const auto labels = noisy_halfplane(rng, x, 0.15);
  const auto cfg = rbf(10.0, 2.0);
  const auto curve = learning_curve(x, labels, cfg, {0.5, 1.0}, 3);
  REQUIRE(curve.points.size() == 2);
  // per-class half-up rounding of 0.5 * n_c
  std::size_t half = 0;
  for (int c : {0, 1}) half += (std::count(labels.begin(), labels.end(), c) + 1) / 2;
  CHECK(curve.points[0].n_train == half);
  CHECK(curve.points[1].n_train == 100);

  const auto m = svm::train_multiclass(x, labels, cfg);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) hits += m.predict(x.row(i)) == labels[i];
  CHECK(curve.points[1].train_accuracy == static_cast<double>(hits) / 100.0);

  CHECK_THROWS_AS(learning_curve(x, labels, cfg, {0.5, 0.2}, 3), ConfigError);
  CHECK_THROWS_AS(learning_curve(x, labels, cfg, {0.02}, 3), InfeasibleError);
  CHECK(curve_csv(curve).rfind("fraction,n_train", 0) == 0);
}

TEST_CASE("a smaller C narrows the train-validation gap on noisy data") {
  std::mt19937_64 rng(29);
  const auto x = checks::random_points(rng, 120, 2);
  const auto labels = noisy_halfplane(rng, x, 0.25);
  const auto high = learning_curve(x, labels, rbf(1000.0, 10.0), {1.0}, 1).points[0];
  const auto low = learning_curve(x, labels, rbf(0.3, 10.0), {1.0}, 1).points[0];
  CHECK(high.train_accuracy - high.cv_accuracy > low.train_accuracy - low.cv_accuracy);
  CHECK(high.train_accuracy > 0.9);
}
