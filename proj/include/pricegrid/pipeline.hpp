#pragma once

// File-level stages shared by the CLI and the end-to-end tests. Every stage reads only the files
// it is given, writes into one output directory and returns a manifest of what it wrote.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pricegrid/catalog.hpp"
#include "pricegrid/eval.hpp"
#include "pricegrid/features.hpp"
#include "pricegrid/ingest.hpp"
#include "pricegrid/labeling.hpp"
#include "pricegrid/svm.hpp"

namespace pricegrid::pipeline {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view content);
nlohmann::json read_json(const fs::path& path);

struct Artifact {
  std::string name;  // file name, relative to the output directory
  std::string sha256;
};

/// Record of one command. Paths are stored relative to their directory and no wall-clock data is
/// kept, so equal inputs give byte-identical manifests.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<Artifact> inputs;
  std::vector<Artifact> outputs;
  std::vector<Diagnostic> diagnostics;

  nlohmann::json to_json() const;
};

/// Writes artifacts into `root` and records their hashes.
class OutputDir {
 public:
  explicit OutputDir(fs::path root);
  const fs::path& root() const { return root_; }
  fs::path path(const std::string& name) const { return root_ / name; }
  void write(const std::string& name, std::string_view content, RunManifest& manifest) const;
  void write_json(const std::string& name, const nlohmann::json& j, RunManifest& manifest) const;
  /// Writes `manifest` itself as manifest_<command>.json.
  void finish(const RunManifest& manifest) const;

 private:
  fs::path root_;
};

/// Hashes an input file into the manifest.
void record_input(const fs::path& path, RunManifest& manifest);

features::Catalog load_catalog(const std::optional<fs::path>& materials,
                               const std::optional<fs::path>& printers,
                               const std::optional<fs::path>& keywords);

std::vector<ingest::RawListing> load_corpus(const fs::path& path, std::vector<Diagnostic>* diagnostics = nullptr);

// -- encoded feature tables --------------------------------------------------

struct FeatureTable {
  std::string schema_fingerprint;
  std::vector<std::string> columns;
  labeling::LabeledSet rows;

  nlohmann::json to_json() const;
  static FeatureTable from_json(const nlohmann::json& j);
};

FeatureTable load_features(const fs::path& path);

// -- model bundle ------------------------------------------------------------

/// Everything needed to score a raw listing.
struct ModelBundle {
  features::FeatureSchema schema;
  features::GeoModel geo;
  labeling::PriceBinning binning;
  svm::MulticlassSvm ovo;
  svm::OvrEnsemble ovr;

  const std::string& fingerprint() const { return ovo.schema_fingerprint; }
  nlohmann::json to_json() const;
  static ModelBundle from_json(const nlohmann::json& j);
};

/// Loads a bundle; throws FingerprintMismatch if the embedded schema and model disagree or the
/// model differs from `expected_fingerprint` (when non-empty).
ModelBundle load_model(const fs::path& path, const std::string& expected_fingerprint = {});

// -- stages ------------------------------------------------------------------

/// corpus.csv
RunManifest run_gen(const ingest::SynthConfig& config, const features::Catalog& catalog, const OutputDir& out);

/// stats.json
RunManifest run_stats(const fs::path& corpus, const features::Catalog& catalog, const OutputDir& out);

struct SplitOptions {
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
  bool preset_bins = false;  // published boundaries instead of fitting the corpus
  std::optional<Region> region;
};

/// bins.json, split.json
RunManifest run_split(const fs::path& corpus, const SplitOptions& opts, const OutputDir& out);

struct FeaturizeOptions {
  std::uint64_t seed = 7;
  int jobs = 1;
  double correlation_threshold = 0.9;
  features::CorrelationMethod correlation = features::CorrelationMethod::Spearman;
  std::optional<std::size_t> clusters;
};

/// geo.json, schema.json, correlation.json, train_features.json, test_features.json, dedup.json
RunManifest run_featurize(const fs::path& corpus, const fs::path& bins, const fs::path& split,
                          const features::Catalog& catalog, const FeaturizeOptions& opts,
                          const OutputDir& out);

/// grid.json, grid.csv, best_config.json
RunManifest run_gridsearch(const fs::path& train_features, const svm::TrainConfig& base,
                           const eval::GridSpec& grid, std::uint64_t seed, int jobs, const OutputDir& out);

/// model.json (one-vs-one and one-vs-rest ensembles plus schema, geo model and bins)
RunManifest run_train(const fs::path& train_features, const fs::path& schema, const fs::path& geo,
                      const fs::path& bins, const svm::TrainConfig& config, int jobs, const OutputDir& out);

/// eval.json, confusion.csv
RunManifest run_eval(const fs::path& model, const fs::path& test_features, const OutputDir& out);

/// roc.json, roc.csv
RunManifest run_roc(const fs::path& model, const fs::path& test_features, const OutputDir& out);

/// curve.json, curve.csv
RunManifest run_curve(const fs::path& train_features, const svm::TrainConfig& config,
                      const std::vector<double>& fractions, std::uint64_t seed, int jobs,
                      const OutputDir& out);

struct PipelineOptions {
  ingest::SynthConfig synth = ingest::SynthConfig::defaults(Region::US);
  std::optional<fs::path> corpus;  // use this corpus instead of generating one
  SplitOptions split;
  FeaturizeOptions featurize;
  svm::TrainConfig base;
  eval::GridSpec grid;
  bool learning_curve = true;
  std::vector<double> curve_fractions = eval::default_curve_fractions();
  std::uint64_t seed = 7;
  int jobs = 1;
};

/// gen -> split -> featurize -> gridsearch -> train -> eval -> roc -> curve, all in `out`.
RunManifest run_pipeline(const PipelineOptions& opts, const features::Catalog& catalog, const OutputDir& out);

// -- prediction --------------------------------------------------------------

struct Prediction {
  int price_class = 0;
  double low = 0.0;
  double high = 0.0;
  std::string range_label;
  std::vector<int> classes;
  std::vector<double> margins;  // one-vs-rest scores, by class
  std::vector<Diagnostic> diagnostics;

  nlohmann::json to_json() const;
};

/// Throws LookupError for an unknown printer model.
Prediction predict(const ModelBundle& model, const ingest::RawListing& listing, const features::Catalog& catalog);

}  // namespace pricegrid::pipeline
