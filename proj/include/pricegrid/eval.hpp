#pragma once

// Cross-validation, grid search, learning curves and classification metrics.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pricegrid/common.hpp"
#include "pricegrid/svm.hpp"

namespace pricegrid::eval {

// -- folds -------------------------------------------------------------------

struct FoldPlan {
  int k = 5;
  std::vector<int> fold;  // fold index per row
  std::uint64_t seed = 0;

  std::vector<std::size_t> train_rows(int f) const;
  std::vector<std::size_t> test_rows(int f) const;
  nlohmann::json to_json() const;
};

/// Members of each class are shuffled with a per-class seed and dealt round-robin from fold 0.
/// Throws InfeasibleError when a class has fewer than k rows.
FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);

/// Failure inside one cross-validation fold.
class FoldError : public Error {
 public:
  FoldError(int fold, const std::string& what)
      : Error("fold " + std::to_string(fold) + ": " + what), fold_(fold) {}
  int fold() const noexcept { return fold_; }

 private:
  int fold_;
};

struct CvResult {
  double mean = 0.0;
  double variance = 0.0;  // population variance of the fold accuracies
  std::vector<double> fold_accuracy;
  svm::TrainStats stats;
};

/// `kernel`, when given, must index the rows of `x`.
CvResult cross_validate(const FeatureMatrix& x, std::span<const int> labels,
                        const svm::TrainConfig& config, const FoldPlan& plan,
                        const svm::KernelSource* kernel = nullptr, int jobs = 1);

// -- grid search -------------------------------------------------------------

enum class GridStage { Coarse, Fine };

std::string_view to_string(GridStage s);

struct GridCell {
  svm::KernelSpec kernel;
  double C = 1.0;
  double mean = 0.0;
  double variance = 0.0;
  std::vector<double> fold_accuracy;
  std::uint64_t iterations = 0;
  std::size_t not_converged = 0;
  std::optional<std::string> error;  // failed cells are excluded from selection
};

struct GridSearchReport {
  GridStage stage = GridStage::Coarse;
  std::vector<GridCell> cells;
  std::optional<std::size_t> best;

  nlohmann::json to_json() const;
};

struct GridSpec {
  std::vector<svm::KernelKind> kernels = {svm::KernelKind::Rbf};
  int min_exponent = -4;  // coarse values 10^min .. 10^max for C and gamma
  int max_exponent = 4;
  std::vector<double> fine_multipliers = {0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> extra_fine_C;
  std::vector<double> extra_fine_gamma;
  int folds = 5;
  int degree = 3;      // polynomial kernels
  double coef0 = 0.0;  // polynomial and sigmoid kernels

  /// Default grid plus C = 6500 and gamma = 0.01 in the fine stage.
  static GridSpec paper_fine();
  std::vector<double> coarse_values() const;
  void validate() const;
  nlohmann::json to_json() const;
  static GridSpec from_json(const nlohmann::json& j);
};

struct GridSearchResult {
  GridSearchReport coarse;
  GridSearchReport fine;
  svm::TrainConfig best;
  FoldPlan plan;
};

/// Index of the best successful cell: maximal mean accuracy, ties to smaller C, then smaller
/// gamma, then earlier kernel kind.
std::optional<std::size_t> select_best(const std::vector<GridCell>& cells);

/// Coarse search over every kernel, then a fine search around the coarse winner. `base` supplies
/// class weights, tol and max_iter. Cells run on up to `jobs` threads; the reports do not
/// depend on `jobs`.
GridSearchResult grid_search(const FeatureMatrix& x, std::span<const int> labels,
                             const svm::TrainConfig& base, const GridSpec& spec, std::uint64_t seed,
                             int jobs = 1);

// -- learning curve ----------------------------------------------------------

struct CurvePoint {
  double fraction = 1.0;
  std::size_t n_train = 0;
  double train_accuracy = 0.0;
  double cv_accuracy = 0.0;
  double cv_variance = 0.0;
};

struct LearningCurve {
  std::vector<CurvePoint> points;
  nlohmann::json to_json() const;
};

std::vector<double> default_curve_fractions();

/// Per fraction: stratified subsample, training accuracy on it, and k-fold CV accuracy within it.
LearningCurve learning_curve(const FeatureMatrix& x, std::span<const int> labels,
                             const svm::TrainConfig& config, const std::vector<double>& fractions,
                             std::uint64_t seed, int folds = 5, int jobs = 1);

// -- metrics -----------------------------------------------------------------

struct ClassMetrics {
  int cls = 0;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<int> classes;
  std::vector<std::vector<std::size_t>> confusion;  // rows true, columns predicted
  std::vector<ClassMetrics> per_class;
  std::size_t n = 0;
  double accuracy = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  double baseline = 0.0;
  std::vector<Diagnostic> diagnostics;

  nlohmann::json to_json() const;
};

/// Harmonic mean; 0 when p + r = 0.
double f1_score(double precision, double recall);

/// Share of the most frequent label.
double baseline_accuracy(std::span<const int> labels);

double accuracy(std::span<const int> truth, std::span<const int> predicted);

/// `classes` fixes the confusion order; empty means the sorted union of both label lists.
EvalReport evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                std::span<const int> classes = {});

EvalReport evaluate(const svm::MulticlassSvm& model, const FeatureMatrix& x,
                    std::span<const int> labels);

// -- ROC ---------------------------------------------------------------------

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the origin
};

struct BinaryRoc {
  std::string name;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct RocCurve {
  std::vector<BinaryRoc> classes;
  BinaryRoc micro;
  std::vector<Diagnostic> diagnostics;

  nlohmann::json to_json() const;
};

/// Threshold sweep over descending unique scores (tied scores step together) with trapezoidal AUC.
/// Requires at least one positive and one negative.
BinaryRoc roc_binary(std::span<const double> scores, std::span<const int> positive);

/// scores[i][c] is the score of sample i for classes[c]. Classes lacking a positive or a negative
/// are skipped with a diagnostic; the micro curve pools every (sample, class) decision.
RocCurve roc_curves(const std::vector<std::vector<double>>& scores, std::span<const int> labels,
                    std::span<const int> classes);

// -- flat CSV exports --------------------------------------------------------

std::string grid_csv(const GridSearchReport& coarse, const GridSearchReport& fine);
std::string folds_csv(const CvResult& cv);
std::string curve_csv(const LearningCurve& curve);
std::string roc_csv(const RocCurve& roc);
std::string confusion_csv(const EvalReport& report);

}  // namespace pricegrid::eval
