#include "pricegrid/labeling.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <unordered_set>

namespace pricegrid::labeling {

PriceClass::PriceClass(int v) : value(v) {
  if (v < 0 || v >= kNumPriceClasses)
    throw ConfigError("price class " + std::to_string(v) + " outside [0, 6]");
}

PriceBinning PriceBinning::preset(Region region) {
  PriceBinning b;
  b.region = region;
  b.source = BinningSource::FixedFromPaper;
  if (region == Region::US)
    b.boundaries = {2.36, 15.1, 21.2, 36.2, 47.8, 64.4, 106.0, 1956.0};
  else
    b.boundaries = {3.75, 15.9, 21.5, 33.1, 40.1, 56.0, 87.2, 2261.5};
  return b;
}

std::pair<double, double> PriceBinning::range(PriceClass c) const {
  return {boundaries[static_cast<std::size_t>(c.value)],
          boundaries[static_cast<std::size_t>(c.value) + 1]};
}

std::string PriceBinning::range_label(PriceClass c) const {
  const auto [lo, hi] = range(c);
  return fmt::format("{:.1f} – {:.1f} USD", lo, hi);
}

nlohmann::json PriceBinning::to_json() const {
  return {{"boundaries", boundaries},
          {"region", std::string(to_string(region))},
          {"source", source == BinningSource::FittedFromData ? "fitted" : "preset"}};
}

PriceBinning PriceBinning::from_json(const nlohmann::json& j) {
  if (!j.contains("boundaries")) throw SchemaError("price binning: missing 'boundaries'");
  PriceBinning b;
  const auto v = j["boundaries"].get<std::vector<double>>();
  if (v.size() != 8) throw SchemaError("price binning: expected 8 boundaries");
  std::copy(v.begin(), v.end(), b.boundaries.begin());
  for (std::size_t i = 1; i < 8; ++i)
    if (!(b.boundaries[i] > b.boundaries[i - 1]))
      throw SchemaError("price binning: boundaries must be strictly ascending");
  if (j.contains("region")) b.region = region_from_string(j["region"].get<std::string>());
  if (j.contains("source"))
    b.source = j["source"].get<std::string>() == "preset" ? BinningSource::FixedFromPaper
                                                           : BinningSource::FittedFromData;
  return b;
}

PriceBinning fit_bins(std::span<const double> prices, Region region) {
  if (prices.size() < 16)
    throw InfeasibleError("fit_bins: need at least 16 prices, got " + std::to_string(prices.size()));
  for (double p : prices)
    if (!(p > 0) || !std::isfinite(p)) throw ConfigError("fit_bins: prices must be positive");
  std::vector<double> sorted(prices.begin(), prices.end());
  std::sort(sorted.begin(), sorted.end());

  PriceBinning b;
  b.region = region;
  b.source = BinningSource::FittedFromData;
  b.boundaries[0] = sorted.front();
  b.boundaries[1] = quantile_sorted(sorted, 0.25);
  b.boundaries[2] = quantile_sorted(sorted, 0.50);
  b.boundaries[3] = quantile_sorted(sorted, 0.75);
  const auto upper_begin = std::lower_bound(sorted.begin(), sorted.end(), b.boundaries[3]);
  const std::span<const double> upper(upper_begin, sorted.end());
  b.boundaries[4] = quantile_sorted(upper, 0.25);
  b.boundaries[5] = quantile_sorted(upper, 0.50);
  b.boundaries[6] = quantile_sorted(upper, 0.75);
  b.boundaries[7] = sorted.back();
  for (std::size_t i = 1; i < 8; ++i)
    if (!(b.boundaries[i] > b.boundaries[i - 1]))
      throw InfeasibleError(fmt::format("fit_bins: degenerate bins (b{} = {} is not above b{} = {})", i,
                                        b.boundaries[i], i - 1, b.boundaries[i - 1]));
  return b;
}

Assignment assign_class(double price, const PriceBinning& bins) {
  const auto& b = bins.boundaries;
  if (price < b[0])
    return {PriceClass(0), fmt::format("price {} below {}; clamped to class 0", price, b[0])};
  if (price > b[7])
    return {PriceClass(6), fmt::format("price {} above {}; clamped to class 6", price, b[7])};
  int c = 0;
  while (c < kNumPriceClasses - 1 && price >= b[static_cast<std::size_t>(c) + 1]) ++c;
  return {PriceClass(c), std::nullopt};
}

SplitIndices stratified_split_indices(std::span<const int> labels, double train_fraction,
                                      std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1))
    throw ConfigError("stratified_split: train fraction must be in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  SplitIndices out;
  for (auto& [cls, members] : by_class) {
    if (members.size() < 2)
      throw InfeasibleError("stratified_split: class " + std::to_string(cls) + " has " +
                            std::to_string(members.size()) + " member(s), need at least 2");
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(members.size()) + 0.5));
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<long>(n_train));
    out.test.insert(out.test.end(), members.begin() + static_cast<long>(n_train), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

LabeledSet LabeledSet::select(std::span<const std::size_t> indices) const {
  LabeledSet out;
  out.x = x.select(indices);
  for (std::size_t i : indices) {
    out.ids.push_back(ids[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

DatasetSplit stratified_split(const LabeledSet& rows, double train_fraction, std::uint64_t seed) {
  const auto idx = stratified_split_indices(rows.labels, train_fraction, seed);
  DatasetSplit split;
  split.train = rows.select(idx.train);
  split.test = rows.select(idx.test);
  split.seed = seed;
  return split;
}

namespace {

std::string row_key(std::span<const double> row, int label) {
  std::string key(sizeof(int) + row.size() * sizeof(double), '\0');
  std::memcpy(key.data(), &label, sizeof(int));
  for (std::size_t i = 0; i < row.size(); ++i) {
    const double v = row[i] == 0.0 ? 0.0 : row[i];  // -0.0 and 0.0 compare equal
    std::memcpy(key.data() + sizeof(int) + i * sizeof(double), &v, sizeof(double));
  }
  return key;
}

}  // namespace

DatasetSplit dedup_test(DatasetSplit split) {
  std::unordered_set<std::string> train_keys;
  for (std::size_t i = 0; i < split.train.size(); ++i)
    train_keys.insert(row_key(split.train.x.row(i), split.train.labels[i]));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    if (train_keys.count(row_key(split.test.x.row(i), split.test.labels[i]))) {
      split.removed_ids.push_back(split.test.ids[i]);
    } else {
      keep.push_back(i);
    }
  }
  split.dedup_removed += split.test.size() - keep.size();
  split.test = split.test.select(keep);
  return split;
}

nlohmann::json split_manifest(const DatasetSplit& split) {
  return {{"seed", split.seed},
          {"train_ids", split.train.ids},
          {"test_ids", split.test.ids},
          {"dedup_removed", split.dedup_removed},
          {"removed_ids", split.removed_ids}};
}

}  // namespace pricegrid::labeling
