#pragma once

// Supplier service listings: schema, CSV / JSON-lines IO, synthetic corpora and summaries.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pricegrid/catalog.hpp"
#include "pricegrid/common.hpp"

namespace pricegrid::ingest {

/// One supplier service listing (a printer / material / resolution / price offer).
///
/// Units: response time in hours, activation age in days, resolution in microns,
/// completion time in days, price in USD for the standard 10 cm benchmark part.
/// `avg_rating` is absent exactly when `num_reviews == 0`. The four sub-ratings are carried
/// for correlation analysis only and are never model predictors.
struct RawListing {
  std::string listing_id;
  std::optional<double> avg_rating;
  std::optional<double> print_quality_rating;
  std::optional<double> speed_rating;
  std::optional<double> service_rating;
  std::optional<double> communication_rating;
  int num_reviews = 0;
  double avg_response_time = 0.0;
  int days_since_activation = 0;
  int num_machines = 1;
  bool registered_business = false;
  double latitude = 0.0;
  double longitude = 0.0;
  Region region = Region::US;
  std::string description_text;
  int num_sample_images = 0;
  std::string printer_model;
  std::string material_name;
  double resolution = 100.0;
  double order_completion_days = 1.0;
  double price = 1.0;

  bool operator==(const RawListing&) const = default;
};

enum class CorpusFormat { CSV, JSON };

CorpusFormat corpus_format_from_string(std::string_view s);
/// Picks the format from a file extension (.csv, .json, .jsonl); CSV otherwise.
CorpusFormat corpus_format_for_path(std::string_view path);

/// Column names, in file order. Sub-rating columns are optional on input.
const std::vector<std::string>& corpus_columns();
const std::vector<std::string>& optional_corpus_columns();

struct RowDiagnostic {
  std::size_t row = 0;  // zero-based data row index
  std::string field;
  std::string message;
};

struct ParseResult {
  std::vector<RawListing> listings;
  std::vector<RowDiagnostic> diagnostics;
};

/// Parses a corpus. Throws SchemaError when the header lacks required columns; every other
/// problem is reported per row and the row is excluded.
ParseResult parse_corpus(std::string_view source, CorpusFormat format);

std::string serialize_corpus(const std::vector<RawListing>& listings, CorpusFormat format);

/// Invariant check for a single listing; empty when valid.
std::vector<RowDiagnostic> validate_listing(const RawListing& l, std::size_t row = 0);

/// Coefficients of the latent log-price score of synthetic listings:
///   log(price) = intercept + log_cost * ln(printer_cost) + process_weight * process_offset
///              + material_weight * material_offset + inv_resolution / resolution + N(0, noise_sd)
/// Draws outside [min_price, max_price] are redrawn, then clamped.
struct PriceModel {
  double intercept = 0.0;
  double log_cost = 0.0;
  double process_weight = 1.0;
  double material_weight = 1.0;
  double inv_resolution = 0.0;
  double noise_sd = 0.1;
  std::map<features::PrintProcess, double> process_offset;
  std::map<features::MaterialCategory, double> material_offset;
  double min_price = 1.0;
  double max_price = 1000.0;
};

struct SynthConfig {
  std::size_t n_listings = 5000;
  Region region = Region::US;
  std::uint64_t seed = 7;
  std::map<features::PrintProcess, double> process_mix;
  std::map<features::MaterialCategory, double> material_mix;
  PriceModel price_model;

  static SynthConfig defaults(Region region);

  void validate() const;
  nlohmann::json to_json() const;
  /// Overlays `j` on the region defaults; unknown keys raise ConfigError naming the key.
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Deterministic synthetic corpus. Listings are grouped by supplier: profile attributes are
/// shared within a supplier, the printer / material / resolution / price offer is per-listing.
std::vector<RawListing> generate_synthetic(const SynthConfig& cfg,
                                           const features::Catalog& catalog = {});

struct NumericSummary {
  std::size_t count = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

struct CorpusStats {
  std::size_t listings = 0;
  std::map<std::string, NumericSummary> numeric;
  std::map<std::string, std::map<std::string, double>> frequencies;

  nlohmann::json to_json() const;
};

/// Per-field summaries; the process / material frequency tables use the catalog.
CorpusStats corpus_stats(const std::vector<RawListing>& listings,
                         const features::Catalog& catalog = {});

}  // namespace pricegrid::ingest
