#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "pricegrid/features.hpp"

namespace pricegrid::features {

namespace {

const std::vector<std::string> kNumeric = {
    "avg_rating",          "num_reviews",       "days_since_activation", "avg_response_time",
    "order_completion_days", "num_machines",    "printer_cost",          "num_sample_images",
    "resolution",          "desc_design_services", "desc_logistics",     "desc_specialties",
    "desc_experience",     "desc_additional_services", "has_reviews"};

const std::vector<std::string> kCategorical = {"registered_business", "geo_cluster", "process",
                                               "material_category"};

// Canonical slot order for a categorical level.
long level_rank(const std::string& feature, const std::string& level) {
  if (feature == "registered_business") return level == "true" ? 0 : 1;
  if (feature == "geo_cluster") return std::stol(level);
  if (feature == "process") {
    auto p = print_process_from_string(level);
    return p ? static_cast<long>(*p) : 1000;
  }
  if (feature == "material_category") {
    auto m = material_category_from_string(level);
    return m ? static_cast<long>(*m) : 1000;
  }
  return 0;
}

}  // namespace

const std::vector<std::string>& numeric_feature_names() { return kNumeric; }
const std::vector<std::string>& categorical_feature_names() { return kCategorical; }

std::size_t FeatureSchema::arity() const {
  std::size_t n = 0;
  for (const auto& f : features) n += f.width();
  return n;
}

std::vector<std::string> FeatureSchema::column_names() const {
  std::vector<std::string> out;
  for (const auto& f : features) {
    if (f.kind == FeatureKind::Numeric)
      out.push_back(f.name);
    else
      for (const auto& level : f.levels) out.push_back(f.name + "=" + level);
  }
  return out;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& f : features) {
    if (f.kind == FeatureKind::Numeric)
      list.push_back({{"name", f.name}, {"kind", "numeric"}, {"mean", f.mean}, {"stddev", f.stddev}});
    else
      list.push_back({{"name", f.name}, {"kind", "one_hot"}, {"levels", f.levels}});
  }
  return {{"features", list}};
}

std::string FeatureSchema::fingerprint() const { return sha256_hex(to_json().dump()).substr(0, 16); }

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  if (!j.contains("features") || !j["features"].is_array())
    throw SchemaError("feature schema: missing 'features' array");
  FeatureSchema s;
  for (const auto& f : j["features"]) {
    FeatureDescriptor d;
    d.name = f.at("name").get<std::string>();
    const auto kind = f.at("kind").get<std::string>();
    if (kind == "numeric") {
      d.kind = FeatureKind::Numeric;
      d.mean = f.at("mean").get<double>();
      d.stddev = f.at("stddev").get<double>();
      if (!(d.stddev > 0)) throw SchemaError("feature schema: non-positive stddev for " + d.name);
    } else if (kind == "one_hot") {
      d.kind = FeatureKind::OneHot;
      d.levels = f.at("levels").get<std::vector<std::string>>();
    } else {
      throw SchemaError("feature schema: unknown kind '" + kind + "'");
    }
    s.features.push_back(std::move(d));
  }
  return s;
}

DerivedFeatures derive_features(const ingest::RawListing& l, const Catalog& catalog,
                                const GeoModel& geo) {
  const PrinterInfo& printer = lookup_printer(l.printer_model, catalog.printers);
  const DescriptionCounts desc = description_vector(l.description_text, catalog.keywords);
  DerivedFeatures d;
  d.listing_id = l.listing_id;
  d.numeric = {l.avg_rating.value_or(0.0),
               static_cast<double>(l.num_reviews),
               static_cast<double>(l.days_since_activation),
               l.avg_response_time,
               l.order_completion_days,
               static_cast<double>(l.num_machines),
               printer.cost,
               static_cast<double>(l.num_sample_images),
               l.resolution,
               static_cast<double>(desc[0]),
               static_cast<double>(desc[1]),
               static_cast<double>(desc[2]),
               static_cast<double>(desc[3]),
               static_cast<double>(desc[4]),
               l.avg_rating ? 1.0 : 0.0};
  d.categorical = {l.registered_business ? "true" : "false",
                   std::to_string(kmeans_assign({l.latitude, l.longitude}, geo)),
                   std::string(to_string(printer.process)),
                   std::string(to_string(categorize_material(l.material_name, catalog.materials)))};
  return d;
}

SchemaFit fit_schema(const std::vector<DerivedFeatures>& train) {
  if (train.empty()) throw InfeasibleError("fit_schema: empty training corpus");
  SchemaFit fit;
  const double n = static_cast<double>(train.size());
  for (std::size_t f = 0; f < kNumeric.size(); ++f) {
    double sum = 0;
    for (const auto& row : train) sum += row.numeric.at(f);
    const double mean = sum / n;
    double ss = 0;
    for (const auto& row : train) {
      const double d = row.numeric[f] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0)) {
      fit.diagnostics.push_back({kNumeric[f], "constant on the training set; column dropped"});
      continue;
    }
    fit.schema.features.push_back({kNumeric[f], FeatureKind::Numeric, mean, sd, {}});
  }
  for (std::size_t f = 0; f < kCategorical.size(); ++f) {
    std::set<std::string> observed;
    for (const auto& row : train) observed.insert(row.categorical.at(f));
    std::vector<std::string> levels(observed.begin(), observed.end());
    const std::string& name = kCategorical[f];
    std::stable_sort(levels.begin(), levels.end(), [&](const std::string& a, const std::string& b) {
      return level_rank(name, a) < level_rank(name, b);
    });
    if (levels.size() < 2) {
      fit.diagnostics.push_back({name, "single level on the training set; column dropped"});
      continue;
    }
    fit.schema.features.push_back({name, FeatureKind::OneHot, 0.0, 1.0, std::move(levels)});
  }
  return fit;
}

EncodeResult encode(const DerivedFeatures& d, const FeatureSchema& schema) {
  EncodeResult out;
  out.vector.listing_id = d.listing_id;
  out.vector.values.reserve(schema.arity());
  for (const auto& f : schema.features) {
    if (f.kind == FeatureKind::Numeric) {
      auto it = std::find(kNumeric.begin(), kNumeric.end(), f.name);
      if (it == kNumeric.end()) throw SchemaError("schema references unknown numeric feature " + f.name);
      const double v = d.numeric.at(static_cast<std::size_t>(it - kNumeric.begin()));
      out.vector.values.push_back((v - f.mean) / f.stddev);
      continue;
    }
    auto it = std::find(kCategorical.begin(), kCategorical.end(), f.name);
    if (it == kCategorical.end())
      throw SchemaError("schema references unknown categorical feature " + f.name);
    const std::string& level = d.categorical.at(static_cast<std::size_t>(it - kCategorical.begin()));
    bool hit = false;
    for (const auto& l : f.levels) {
      const bool match = l == level;
      hit = hit || match;
      out.vector.values.push_back(match ? 1.0 : 0.0);
    }
    if (!hit)
      out.diagnostics.push_back(
          {d.listing_id, f.name + ": level '" + level + "' unseen in training; encoded as zeros"});
  }
  return out;
}

EncodeResult encode(const ingest::RawListing& listing, const FeatureSchema& schema,
                    const GeoModel& geo, const Catalog& catalog) {
  return encode(derive_features(listing, catalog, geo), schema);
}

}  // namespace pricegrid::features
