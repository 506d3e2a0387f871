#pragma once

// Feature extraction: geographic clusters, correlation pruning, and the encoded schema.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pricegrid/catalog.hpp"
#include "pricegrid/common.hpp"
#include "pricegrid/ingest.hpp"

namespace pricegrid::features {

// -- geographic clusters -----------------------------------------------------

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

/// k-means model over raw (lat, lon) degrees.
struct GeoModel {
  std::size_t k = 0;
  std::vector<GeoPoint> centroids;
  Region region = Region::US;
  std::uint64_t seed = 0;
  double inertia = 0.0;

  nlohmann::json to_json() const;
  static GeoModel from_json(const nlohmann::json& j);
};

inline constexpr std::size_t default_cluster_count(Region r) { return r == Region::US ? 6 : 9; }

struct KMeansResult {
  GeoModel model;
  /// Inertia after each Lloyd iteration of the winning restart.
  std::vector<double> inertia_history;
  /// Final inertia of every restart, by restart index.
  std::vector<double> restart_inertia;
};

/// Lloyd's algorithm with k-means++ seeding. Each restart runs to an assignment fixpoint or
/// 300 iterations; the lowest-inertia restart wins (ties -> lowest restart index).
/// Throws InfeasibleError when there are fewer distinct points than k.
KMeansResult kmeans_fit(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed,
                        int restarts = 10, int jobs = 1);

/// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
std::size_t kmeans_assign(const GeoPoint& p, const GeoModel& model);

double squared_distance(const GeoPoint& a, const GeoPoint& b);

// -- correlation -------------------------------------------------------------

enum class CorrelationMethod { Pearson, Spearman };

struct NamedColumn {
  std::string name;
  std::vector<double> values;
};

struct CorrelationReport {
  CorrelationMethod method = CorrelationMethod::Spearman;
  std::vector<std::string> names;           // columns in the matrix
  std::vector<std::vector<double>> matrix;  // symmetric, unit diagonal
  std::vector<std::string> excluded;        // constant columns left out
  std::vector<std::string> dropped;         // filled by prune_correlated
  double threshold = 0.9;

  double at(const std::string& a, const std::string& b) const;
  nlohmann::json to_json() const;
};

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

CorrelationReport correlation_matrix(const std::vector<NamedColumn>& columns,
                                     CorrelationMethod method = CorrelationMethod::Spearman);

/// Greedy pruning in priority order: a column is kept unless its |r| with an already kept column
/// exceeds `threshold`. Listed names come first in list order; the rest follow by name, so the
/// result does not depend on column order. Returns retained names sorted by priority.
std::vector<std::string> prune_correlated(CorrelationReport& report, double threshold,
                                          const std::vector<std::string>& keep_priority = {
                                              "avg_rating"});

// -- schema ------------------------------------------------------------------

enum class FeatureKind { Numeric, OneHot };

struct FeatureDescriptor {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  double mean = 0.0;    // numeric only
  double stddev = 1.0;  // numeric only, population
  std::vector<std::string> levels;  // one-hot only, slot order

  std::size_t width() const { return kind == FeatureKind::Numeric ? 1 : levels.size(); }
  bool operator==(const FeatureDescriptor&) const = default;
};

/// Ordered description of the encoded feature vector.
struct FeatureSchema {
  std::vector<FeatureDescriptor> features;

  std::size_t arity() const;
  std::vector<std::string> column_names() const;
  /// First 16 hex digits of the SHA-256 of the canonical JSON form.
  std::string fingerprint() const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);

  bool operator==(const FeatureSchema&) const = default;
};

/// Numeric predictors, in schema order.
const std::vector<std::string>& numeric_feature_names();
/// Categorical predictors, in schema order.
const std::vector<std::string>& categorical_feature_names();

/// Values of one listing before standardization / one-hot expansion.
struct DerivedFeatures {
  std::string listing_id;
  std::vector<double> numeric;           // numeric_feature_names() order
  std::vector<std::string> categorical;  // categorical_feature_names() order
};

/// Listing -> derived values. Throws LookupError for an unknown printer model.
DerivedFeatures derive_features(const ingest::RawListing& listing, const Catalog& catalog,
                                const GeoModel& geo);

struct SchemaFit {
  FeatureSchema schema;
  std::vector<Diagnostic> diagnostics;
};

/// Train-set statistics for every numeric predictor, observed levels for every categorical
/// (in canonical level order). Constant columns are dropped with a diagnostic.
SchemaFit fit_schema(const std::vector<DerivedFeatures>& train);

struct FeatureVector {
  std::string listing_id;
  std::vector<double> values;
};

struct EncodeResult {
  FeatureVector vector;
  std::vector<Diagnostic> diagnostics;
};

EncodeResult encode(const DerivedFeatures& derived, const FeatureSchema& schema);
EncodeResult encode(const ingest::RawListing& listing, const FeatureSchema& schema,
                    const GeoModel& geo, const Catalog& catalog);

/// Points of a corpus.
std::vector<GeoPoint> geo_points(const std::vector<ingest::RawListing>& listings);

}  // namespace pricegrid::features
