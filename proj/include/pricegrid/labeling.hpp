#pragma once

// Seven-band price labels and the stratified train/test split.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pricegrid/common.hpp"

namespace pricegrid::labeling {

inline constexpr int kNumPriceClasses = 7;

/// Price band index in [0, 6].
struct PriceClass {
  int value = 0;

  constexpr PriceClass() = default;
  explicit PriceClass(int v);
  bool operator==(const PriceClass&) const = default;
  auto operator<=>(const PriceClass&) const = default;
};

enum class BinningSource { FittedFromData, FixedFromPaper };

/// b0 < b1 < ... < b7. Class c covers [b_c, b_{c+1}); the last class also includes b7.
struct PriceBinning {
  std::array<double, 8> boundaries{};
  Region region = Region::US;
  BinningSource source = BinningSource::FittedFromData;

  /// Published quartile boundaries for US and EU listings.
  static PriceBinning preset(Region region);

  std::pair<double, double> range(PriceClass c) const;
  /// "2.4 – 15.1 USD"
  std::string range_label(PriceClass c) const;

  nlohmann::json to_json() const;
  static PriceBinning from_json(const nlohmann::json& j);

  bool operator==(const PriceBinning&) const = default;
};

/// Quartiles of the sample give b1..b3; quartiles of the prices >= b3 give b4..b6;
/// b0 / b7 are the sample min / max. Throws InfeasibleError for fewer than 16 prices or
/// non-ascending boundaries.
PriceBinning fit_bins(std::span<const double> prices, Region region = Region::US);

struct Assignment {
  PriceClass cls;
  std::optional<std::string> diagnostic;  // set when the price was clamped
};

Assignment assign_class(double price, const PriceBinning& bins);

struct SplitIndices {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// Per class, round(fraction * n_c) (half up) members go to train, chosen by a seeded shuffle.
/// Throws InfeasibleError when a class has fewer than 2 members.
SplitIndices stratified_split_indices(std::span<const int> labels, double train_fraction,
                                      std::uint64_t seed);

/// Encoded rows with ids and class labels.
struct LabeledSet {
  std::vector<std::string> ids;
  FeatureMatrix x;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  LabeledSet select(std::span<const std::size_t> indices) const;
};

struct DatasetSplit {
  LabeledSet train;
  LabeledSet test;
  std::uint64_t seed = 0;
  std::size_t dedup_removed = 0;
  std::vector<std::string> removed_ids;
};

DatasetSplit stratified_split(const LabeledSet& rows, double train_fraction, std::uint64_t seed);

/// Removes test rows whose (encoded vector, label) equals some train row. Train is untouched,
/// duplicates inside train are kept.
DatasetSplit dedup_test(DatasetSplit split);

/// Split manifest: ids per partition.
nlohmann::json split_manifest(const DatasetSplit& split);

}  // namespace pricegrid::labeling
