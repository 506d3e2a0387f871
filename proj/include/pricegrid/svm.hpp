#pragma once

// Soft-margin kernel SVM trained by sequential minimal optimization on the dual.
//
// Binary problem (minimization form):
//   min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C_i,  y'a = 0,   Q_ij = y_i y_j k(x_i, x_j)
// with per-sample bounds C_i = C_pos or C_neg. The decision function is
//   f(x) = sum_i a_i y_i k(x_i, x) + b
// and the slack of a training point is max(0, 1 - y_i f(x_i)).

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pricegrid/common.hpp"

namespace pricegrid::svm {

// -- kernels -----------------------------------------------------------------

enum class KernelKind { Linear, Polynomial, Rbf, Sigmoid };

std::string_view to_string(KernelKind k);
KernelKind kernel_kind_from_string(std::string_view s);

struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  double gamma = 1.0;
  int degree = 3;
  double coef0 = 0.0;

  static KernelSpec rbf(double gamma) { return {KernelKind::Rbf, gamma, 3, 0.0}; }
  static KernelSpec linear() { return {KernelKind::Linear, 1.0, 1, 0.0}; }
  static KernelSpec polynomial(int degree, double gamma, double coef0) {
    return {KernelKind::Polynomial, gamma, degree, coef0};
  }
  static KernelSpec sigmoid(double gamma, double coef0) {
    return {KernelKind::Sigmoid, gamma, 3, coef0};
  }

  bool uses_gamma() const { return kind != KernelKind::Linear; }
  void validate() const;

  nlohmann::json to_json() const;
  static KernelSpec from_json(const nlohmann::json& j);
  bool operator==(const KernelSpec&) const = default;
};

/// RBF exp(-g|x-z|^2), linear x.z, polynomial (g x.z + c0)^d, sigmoid tanh(g x.z + c0).
double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> z);

/// Source of kernel entries over a fixed, indexed point set.
class KernelSource {
 public:
  virtual ~KernelSource() = default;
  virtual std::size_t size() const = 0;
  virtual double entry(std::size_t i, std::size_t j) const = 0;
  /// out[t] = K(i, cols[t])
  virtual void fill_row(std::size_t i, std::span<const std::size_t> cols,
                        std::span<double> out) const = 0;
};

/// Evaluates the kernel from the points on demand.
class PointKernel final : public KernelSource {
 public:
  PointKernel(const FeatureMatrix& points, KernelSpec spec);
  std::size_t size() const override { return points_->rows(); }
  double entry(std::size_t i, std::size_t j) const override;
  void fill_row(std::size_t i, std::span<const std::size_t> cols,
                std::span<double> out) const override;

 private:
  const FeatureMatrix* points_;
  KernelSpec spec_;
};

/// Pairwise squared Euclidean distances, reusable across RBF widths.
class SquaredDistances {
 public:
  static SquaredDistances compute(const FeatureMatrix& points, int jobs = 1);
  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

/// Fully materialized Gram matrix.
class DenseGram final : public KernelSource {
 public:
  static DenseGram compute(const FeatureMatrix& points, const KernelSpec& spec, int jobs = 1);
  static DenseGram rbf(const SquaredDistances& d2, double gamma, int jobs = 1);

  std::size_t size() const override { return n_; }
  double entry(std::size_t i, std::size_t j) const override { return k_[i * n_ + j]; }
  void fill_row(std::size_t i, std::span<const std::size_t> cols,
                std::span<double> out) const override;

 private:
  std::size_t n_ = 0;
  std::vector<double> k_;
};

// -- configuration -----------------------------------------------------------

struct BalancedWeights {
  bool operator==(const BalancedWeights&) const = default;
};
using WeightMode = std::variant<BalancedWeights, std::map<int, double>>;

/// Balanced: weight_c = n / (k * n_c). An explicit map is validated against the labels.
/// `declared` lists the classes that must receive a weight (defaults to those present).
std::map<int, double> class_weights(std::span<const int> labels, const WeightMode& mode,
                                    std::span<const int> declared = {});

/// Pair selection for SMO. Both stop on the same maximal-violation gap; second order picks the
/// partner by the largest guaranteed decrease of the objective and needs fewer iterations.
enum class WorkingSet { FirstOrder, SecondOrder };

std::string_view to_string(WorkingSet w);
WorkingSet working_set_from_string(std::string_view s);

struct TrainConfig {
  double C = 1.0;
  KernelSpec kernel;
  WeightMode class_weights = BalancedWeights{};
  double tol = 1e-3;
  std::uint64_t max_iter = 10'000'000;
  std::size_t cache_bytes = std::size_t{256} << 20;
  WorkingSet working_set = WorkingSet::FirstOrder;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// -- binary solver -----------------------------------------------------------

struct BinarySvm {
  FeatureMatrix support_vectors;
  std::vector<double> coeffs;  // a_i * y_i
  double bias = 0.0;
  KernelSpec kernel;
  int positive_class = 1;   // original label mapped to +1
  int negative_class = -1;  // original label mapped to -1
  /// Row of each support vector in the KernelSource used for training (empty once
  /// deserialized). Allows scoring through a precomputed Gram matrix.
  std::vector<std::size_t> source_rows;

  double decision_value(std::span<const double> x) const;
  /// Decision value of row `j` of the training KernelSource.
  double decision_value_indexed(const KernelSource& kernel, std::size_t j) const;

  nlohmann::json to_json() const;
  static BinarySvm from_json(const nlohmann::json& j);
};

struct BinaryTrainResult {
  BinarySvm model;
  std::vector<double> alpha;    // one per training row
  std::vector<double> bounds;   // C_i per training row
  double dual_objective = 0.0;  // sum a - 1/2 a'Qa (maximization form)
  double gap = 0.0;             // maximal violating pair gap at exit
  double max_kkt_violation = 0.0;
  std::uint64_t iterations = 0;
  bool converged = true;
  std::optional<std::string> warning;
};

struct SmoOptions {
  double tol = 1e-3;
  std::uint64_t max_iter = 10'000'000;
  std::size_t cache_bytes = std::size_t{256} << 20;
  WorkingSet working_set = WorkingSet::FirstOrder;
};

/// Trains on rows `subset` of `points` (kernel entries come from `kernel`, which must index the
/// same rows). `y` holds +1 / -1 per subset entry.
BinaryTrainResult smo_train(const FeatureMatrix& points, const KernelSource& kernel,
                            const KernelSpec& spec, std::span<const std::size_t> subset,
                            std::span<const int> y, double c_pos, double c_neg,
                            const SmoOptions& opts = {});

/// Convenience overload over all rows of `x`.
BinaryTrainResult smo_train(const FeatureMatrix& x, std::span<const int> y, double c_pos,
                            double c_neg, const KernelSpec& spec, double tol = 1e-3,
                            std::uint64_t max_iter = 10'000'000);

/// Largest per-point KKT violation of a trained model on its own training rows.
double kkt_violation(std::span<const double> alpha, std::span<const double> bounds,
                     std::span<const int> y, std::span<const double> decision);

// -- multiclass --------------------------------------------------------------

/// Rows of a kernel source selected for training, with their class labels.
struct TrainingSet {
  const FeatureMatrix* points = nullptr;
  const KernelSource* kernel = nullptr;  // null: evaluate from points
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  std::vector<int> classes;  // declared classes, ascending; empty means those present

  static TrainingSet all(const FeatureMatrix& x, std::span<const int> labels,
                         const KernelSource* kernel = nullptr);
};

struct PairModel {
  int first = 0;   // +1 side, votes for `first` when f(x) > 0
  int second = 0;  // -1 side
  BinarySvm svm;
};

struct TrainStats {
  std::size_t binary_problems = 0;
  std::size_t not_converged = 0;
  std::uint64_t iterations = 0;
  double max_kkt_violation = 0.0;
};

/// One-vs-one ensemble; class pairs ordered (i < j) over `classes`.
struct MulticlassSvm {
  std::vector<int> classes;
  std::vector<PairModel> pairs;
  TrainConfig config;
  std::string schema_fingerprint;
  std::vector<Diagnostic> diagnostics;
  TrainStats stats;

  /// Majority vote; ties go to the larger sum of |f| over the pairs each tied class won,
  /// then to the lower class index.
  int predict(std::span<const double> x) const;
  int predict_indexed(const KernelSource& kernel, std::size_t j) const;
  std::vector<double> pair_decisions(std::span<const double> x) const;
  int vote(std::span<const double> decisions) const;

  nlohmann::json to_json() const;
  /// Refuses a model whose fingerprint differs from `expected_fingerprint` (when non-empty).
  static MulticlassSvm from_json(const nlohmann::json& j, const std::string& expected_fingerprint = {});
};

/// Pair problems run on up to `jobs` threads; the result does not depend on `jobs`.
MulticlassSvm train_multiclass(const TrainingSet& data, const TrainConfig& config, int jobs = 1);
MulticlassSvm train_multiclass(const FeatureMatrix& x, std::span<const int> labels,
                               const TrainConfig& config, int jobs = 1);

/// One-vs-rest ensemble used for per-class ROC scores.
struct OvrEnsemble {
  std::vector<int> classes;
  std::vector<BinarySvm> models;
  TrainConfig config;
  TrainStats stats;

  std::vector<double> class_scores(std::span<const double> x) const;
  std::vector<double> class_scores_indexed(const KernelSource& kernel, std::size_t j) const;

  nlohmann::json to_json() const;
  static OvrEnsemble from_json(const nlohmann::json& j);
};

/// Model c separates class c (+1) from the rest (-1) with balanced binary weights.
OvrEnsemble train_ovr(const TrainingSet& data, const TrainConfig& config, int jobs = 1);

}  // namespace pricegrid::svm
