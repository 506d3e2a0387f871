#include "pricegrid/ingest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace pricegrid::ingest {

using features::MaterialCategory;
using features::PrintProcess;

namespace {

const std::vector<std::string> kColumns = {
    "listing_id",         "avg_rating",           "print_quality_rating", "speed_rating",
    "service_rating",     "communication_rating", "num_reviews",          "avg_response_time_hours",
    "days_since_activation", "num_machines",      "registered_business",  "latitude",
    "longitude",          "region",               "description",          "num_sample_images",
    "printer_model",      "material",             "resolution_microns",   "order_completion_days",
    "price_usd"};

const std::vector<std::string> kOptionalColumns = {"print_quality_rating", "speed_rating",
                                                   "service_rating", "communication_rating"};

// -- CSV ---------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv_records(std::string_view src) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (src.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  for (; i < src.size(); ++i) {
    const char c = src[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < src.size() && src[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      // tolerated before \n
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw SchemaError("csv: unterminated quoted field");
  if (field_started || !record.empty()) end_record();
  return records;
}

std::string csv_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// -- cell conversion ---------------------------------------------------------

struct CellError {
  std::string message;
};

std::string trimmed(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double to_real(std::string_view cell) {
  const std::string t = trimmed(cell);
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw CellError{"not a number: '" + std::string(cell) + "'"};
  return v;
}

int to_int(std::string_view cell) {
  const std::string t = trimmed(cell);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || v < INT32_MIN ||
      v > INT32_MAX)
    throw CellError{"not an integer: '" + std::string(cell) + "'"};
  return static_cast<int>(v);
}

bool to_bool(std::string_view cell) {
  const std::string k = normalize_key(cell);
  if (k == "true" || k == "1" || k == "yes") return true;
  if (k == "false" || k == "0" || k == "no") return false;
  throw CellError{"not a boolean: '" + std::string(cell) + "'"};
}

std::optional<double> to_opt_real(std::string_view cell) {
  if (trimmed(cell).empty()) return std::nullopt;
  return to_real(cell);
}

// A listing field accessor keyed by column name, shared by the CSV and JSON paths.
struct FieldSource {
  virtual ~FieldSource() = default;
  virtual bool has(const std::string& col) const = 0;
  // Empty optional means "absent / null".
  virtual std::optional<std::string> text(const std::string& col) const = 0;
  virtual double real(const std::string& col) const = 0;
  virtual int integer(const std::string& col) const = 0;
  virtual bool boolean(const std::string& col) const = 0;
  virtual std::optional<double> opt_real(const std::string& col) const = 0;
};

struct CsvRow final : FieldSource {
  const std::map<std::string, std::size_t>& index;
  const std::vector<std::string>& cells;
  CsvRow(const std::map<std::string, std::size_t>& idx, const std::vector<std::string>& c)
      : index(idx), cells(c) {}
  const std::string& cell(const std::string& col) const { return cells.at(index.at(col)); }
  bool has(const std::string& col) const override { return index.count(col) != 0; }
  std::optional<std::string> text(const std::string& col) const override { return cell(col); }
  double real(const std::string& col) const override { return to_real(cell(col)); }
  int integer(const std::string& col) const override { return to_int(cell(col)); }
  bool boolean(const std::string& col) const override { return to_bool(cell(col)); }
  std::optional<double> opt_real(const std::string& col) const override {
    return to_opt_real(cell(col));
  }
};

struct JsonRow final : FieldSource {
  const nlohmann::json& obj;
  explicit JsonRow(const nlohmann::json& o) : obj(o) {}
  bool has(const std::string& col) const override { return obj.contains(col); }
  const nlohmann::json& at(const std::string& col) const {
    if (!obj.contains(col)) throw CellError{"missing field"};
    return obj.at(col);
  }
  std::optional<std::string> text(const std::string& col) const override {
    const auto& v = at(col);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) throw CellError{"expected a string"};
    return v.get<std::string>();
  }
  double real(const std::string& col) const override {
    const auto& v = at(col);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return to_real(v.get<std::string>());
    throw CellError{"expected a number"};
  }
  int integer(const std::string& col) const override {
    const auto& v = at(col);
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (std::floor(d) != d) throw CellError{"expected an integer"};
      return static_cast<int>(d);
    }
    if (v.is_string()) return to_int(v.get<std::string>());
    throw CellError{"expected an integer"};
  }
  bool boolean(const std::string& col) const override {
    const auto& v = at(col);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) return to_bool(v.get<std::string>());
    if (v.is_number_integer()) return to_bool(std::to_string(v.get<int>()));
    throw CellError{"expected a boolean"};
  }
  std::optional<double> opt_real(const std::string& col) const override {
    if (!obj.contains(col) || obj.at(col).is_null()) return std::nullopt;
    const auto& v = obj.at(col);
    if (v.is_string() && trimmed(v.get<std::string>()).empty()) return std::nullopt;
    return real(col);
  }
};

// Returns nullopt and appends diagnostics when the row cannot be converted.
std::optional<RawListing> read_listing(const FieldSource& src, std::size_t row,
                                       std::vector<RowDiagnostic>& diags) {
  RawListing l;
  const std::size_t before = diags.size();
  auto guard = [&](const std::string& col, auto&& fn) {
    try {
      fn();
    } catch (const CellError& e) {
      diags.push_back({row, col, e.message});
    } catch (const ConfigError& e) {
      diags.push_back({row, col, e.what()});
    }
  };
  guard("listing_id", [&] { l.listing_id = src.text("listing_id").value_or(""); });
  guard("avg_rating", [&] { l.avg_rating = src.opt_real("avg_rating"); });
  guard("print_quality_rating", [&] {
    if (src.has("print_quality_rating")) l.print_quality_rating = src.opt_real("print_quality_rating");
  });
  guard("speed_rating", [&] {
    if (src.has("speed_rating")) l.speed_rating = src.opt_real("speed_rating");
  });
  guard("service_rating", [&] {
    if (src.has("service_rating")) l.service_rating = src.opt_real("service_rating");
  });
  guard("communication_rating", [&] {
    if (src.has("communication_rating"))
      l.communication_rating = src.opt_real("communication_rating");
  });
  guard("num_reviews", [&] { l.num_reviews = src.integer("num_reviews"); });
  guard("avg_response_time_hours",
        [&] { l.avg_response_time = src.real("avg_response_time_hours"); });
  guard("days_since_activation",
        [&] { l.days_since_activation = src.integer("days_since_activation"); });
  guard("num_machines", [&] { l.num_machines = src.integer("num_machines"); });
  guard("registered_business",
        [&] { l.registered_business = src.boolean("registered_business"); });
  guard("latitude", [&] { l.latitude = src.real("latitude"); });
  guard("longitude", [&] { l.longitude = src.real("longitude"); });
  guard("region", [&] { l.region = region_from_string(src.text("region").value_or("")); });
  guard("description", [&] { l.description_text = src.text("description").value_or(""); });
  guard("num_sample_images", [&] { l.num_sample_images = src.integer("num_sample_images"); });
  guard("printer_model", [&] { l.printer_model = src.text("printer_model").value_or(""); });
  guard("material", [&] { l.material_name = src.text("material").value_or(""); });
  guard("resolution_microns", [&] { l.resolution = src.real("resolution_microns"); });
  guard("order_completion_days",
        [&] { l.order_completion_days = src.real("order_completion_days"); });
  guard("price_usd", [&] { l.price = src.real("price_usd"); });
  if (diags.size() != before) return std::nullopt;
  auto invalid = validate_listing(l, row);
  if (!invalid.empty()) {
    diags.insert(diags.end(), invalid.begin(), invalid.end());
    return std::nullopt;
  }
  return l;
}

void require_columns(const std::set<std::string>& present) {
  std::vector<std::string> missing;
  for (const auto& c : kColumns) {
    if (std::find(kOptionalColumns.begin(), kOptionalColumns.end(), c) != kOptionalColumns.end())
      continue;
    if (!present.count(c)) missing.push_back(c);
  }
  if (missing.empty()) return;
  std::string names;
  for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
  throw SchemaError("corpus header is missing columns: " + names);
}

std::string fmt_real(double v) { return fmt::format("{}", v); }

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_real(*v) : std::string(); }

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

CorpusFormat corpus_format_from_string(std::string_view s) {
  const std::string k = normalize_key(s);
  if (k == "csv") return CorpusFormat::CSV;
  if (k == "json" || k == "jsonl") return CorpusFormat::JSON;
  throw ConfigError("unknown corpus format '" + std::string(s) + "' (expected csv or json)");
}

CorpusFormat corpus_format_for_path(std::string_view path) {
  const std::string p = normalize_key(path);
  auto ends_with = [&](std::string_view suffix) {
    return p.size() >= suffix.size() && p.compare(p.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".json") || ends_with(".jsonl") ? CorpusFormat::JSON : CorpusFormat::CSV;
}

const std::vector<std::string>& corpus_columns() { return kColumns; }
const std::vector<std::string>& optional_corpus_columns() { return kOptionalColumns; }

std::vector<RowDiagnostic> validate_listing(const RawListing& l, std::size_t row) {
  std::vector<RowDiagnostic> d;
  auto rating_ok = [](const std::optional<double>& r) { return !r || (*r >= 1.0 && *r <= 5.0); };
  if (l.listing_id.empty()) d.push_back({row, "listing_id", "empty listing id"});
  if (!rating_ok(l.avg_rating)) d.push_back({row, "avg_rating", "rating out of [1,5]"});
  for (const auto& [name, r] :
       {std::pair{"print_quality_rating", l.print_quality_rating},
        std::pair{"speed_rating", l.speed_rating}, std::pair{"service_rating", l.service_rating},
        std::pair{"communication_rating", l.communication_rating}})
    if (!rating_ok(r)) d.push_back({row, name, "rating out of [1,5]"});
  if (l.num_reviews < 0) d.push_back({row, "num_reviews", "negative review count"});
  if (l.avg_rating && l.num_reviews == 0)
    d.push_back({row, "avg_rating", "rating present but num_reviews = 0"});
  if (!l.avg_rating && l.num_reviews > 0)
    d.push_back({row, "avg_rating", "rating absent but num_reviews > 0"});
  if (!(l.avg_response_time >= 0)) d.push_back({row, "avg_response_time_hours", "negative response time"});
  if (l.days_since_activation < 0)
    d.push_back({row, "days_since_activation", "negative activation age"});
  if (l.num_machines < 1) d.push_back({row, "num_machines", "num_machines must be positive"});
  if (!(l.latitude >= -90 && l.latitude <= 90)) d.push_back({row, "latitude", "latitude out of [-90,90]"});
  if (!(l.longitude >= -180 && l.longitude <= 180))
    d.push_back({row, "longitude", "longitude out of [-180,180]"});
  if (l.num_sample_images < 0) d.push_back({row, "num_sample_images", "negative image count"});
  if (!(l.resolution > 0)) d.push_back({row, "resolution_microns", "resolution must be positive"});
  if (!(l.order_completion_days > 0))
    d.push_back({row, "order_completion_days", "completion time must be positive"});
  if (!(l.price > 0)) d.push_back({row, "price_usd", "price must be positive"});
  return d;
}

ParseResult parse_corpus(std::string_view source, CorpusFormat format) {
  ParseResult out;
  std::set<std::string> seen_ids;
  auto accept = [&](std::optional<RawListing> l, std::size_t row) {
    if (!l) return;
    if (!seen_ids.insert(l->listing_id).second) {
      out.diagnostics.push_back({row, "listing_id", "duplicate listing id '" + l->listing_id + "'"});
      return;
    }
    out.listings.push_back(std::move(*l));
  };

  if (format == CorpusFormat::CSV) {
    auto records = read_csv_records(source);
    if (records.empty()) throw SchemaError("corpus has no header row");
    std::map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < records[0].size(); ++c) index[trimmed(records[0][c])] = c;
    std::set<std::string> present;
    for (const auto& [k, v] : index) present.insert(k);
    require_columns(present);
    for (std::size_t r = 1; r < records.size(); ++r) {
      const std::size_t row = r - 1;
      if (records[r].size() != records[0].size()) {
        out.diagnostics.push_back({row, "", "expected " + std::to_string(records[0].size()) +
                                                " cells, found " + std::to_string(records[r].size())});
        continue;
      }
      accept(read_listing(CsvRow(index, records[r]), row, out.diagnostics), row);
    }
    return out;
  }

  std::istringstream in{std::string(source)};
  std::string line;
  std::size_t row = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    if (trimmed(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      if (!header_checked) throw SchemaError(std::string("corpus: first record is not JSON: ") + e.what());
      out.diagnostics.push_back({row++, "", std::string("malformed JSON record: ") + e.what()});
      continue;
    }
    if (!obj.is_object()) {
      if (!header_checked) throw SchemaError("corpus: first record is not a JSON object");
      out.diagnostics.push_back({row++, "", "record is not a JSON object"});
      continue;
    }
    if (!header_checked) {
      std::set<std::string> present;
      for (const auto& [k, v] : obj.items()) present.insert(k);
      require_columns(present);
      header_checked = true;
    }
    accept(read_listing(JsonRow(obj), row, out.diagnostics), row);
    ++row;
  }
  if (!header_checked) throw SchemaError("corpus has no records");
  return out;
}

std::string serialize_corpus(const std::vector<RawListing>& listings, CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::CSV) {
    for (std::size_t c = 0; c < kColumns.size(); ++c) out += (c ? "," : "") + kColumns[c];
    out += "\n";
    for (const auto& l : listings) {
      out += fmt::format(
          "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_quote(l.listing_id),
          fmt_opt(l.avg_rating), fmt_opt(l.print_quality_rating), fmt_opt(l.speed_rating),
          fmt_opt(l.service_rating), fmt_opt(l.communication_rating), l.num_reviews,
          fmt_real(l.avg_response_time), l.days_since_activation, l.num_machines,
          l.registered_business ? "true" : "false", fmt_real(l.latitude), fmt_real(l.longitude),
          to_string(l.region), csv_quote(l.description_text), l.num_sample_images,
          csv_quote(l.printer_model), csv_quote(l.material_name), fmt_real(l.resolution),
          fmt_real(l.order_completion_days), fmt_real(l.price));
    }
    return out;
  }
  for (const auto& l : listings) {
    nlohmann::ordered_json j;
    j["listing_id"] = l.listing_id;
    j["avg_rating"] = opt_json(l.avg_rating);
    j["print_quality_rating"] = opt_json(l.print_quality_rating);
    j["speed_rating"] = opt_json(l.speed_rating);
    j["service_rating"] = opt_json(l.service_rating);
    j["communication_rating"] = opt_json(l.communication_rating);
    j["num_reviews"] = l.num_reviews;
    j["avg_response_time_hours"] = l.avg_response_time;
    j["days_since_activation"] = l.days_since_activation;
    j["num_machines"] = l.num_machines;
    j["registered_business"] = l.registered_business;
    j["latitude"] = l.latitude;
    j["longitude"] = l.longitude;
    j["region"] = std::string(to_string(l.region));
    j["description"] = l.description_text;
    j["num_sample_images"] = l.num_sample_images;
    j["printer_model"] = l.printer_model;
    j["material"] = l.material_name;
    j["resolution_microns"] = l.resolution;
    j["order_completion_days"] = l.order_completion_days;
    j["price_usd"] = l.price;
    out += j.dump() + "\n";
  }
  return out;
}

// -- synthetic corpora -------------------------------------------------------

namespace {

struct City {
  double lat, lon, weight;
};

const std::vector<City>& cities(Region r) {
  static const std::vector<City> us = {
      {40.71, -74.01, 0.16}, {34.05, -118.24, 0.14}, {37.77, -122.42, 0.12},
      {41.88, -87.63, 0.10}, {32.78, -96.80, 0.09},  {47.61, -122.33, 0.07},
      {42.36, -71.06, 0.08}, {33.75, -84.39, 0.07},  {39.74, -104.99, 0.06},
      {25.76, -80.19, 0.05}, {44.98, -93.27, 0.06}};
  static const std::vector<City> eu = {
      {51.51, -0.13, 0.14}, {48.86, 2.35, 0.11},  {52.52, 13.40, 0.11}, {52.37, 4.90, 0.09},
      {40.42, -3.70, 0.07}, {45.46, 9.19, 0.08},  {52.23, 21.01, 0.06}, {59.33, 18.07, 0.05},
      {50.08, 14.44, 0.05}, {48.21, 16.37, 0.06}, {41.39, 2.17, 0.07},  {48.14, 11.58, 0.11}};
  return r == Region::US ? us : eu;
}

const std::vector<std::string>& description_sentences() {
  static const std::vector<std::string> s = {
      "We offer 3D scanning and CAD modeling for custom parts.",
      "Design help available for your project.",
      "Reverse engineering of broken parts is our favorite job.",
      "Fast turnaround time on most orders.",
      "Free shipping on orders over fifty dollars, local pickup also possible.",
      "Same day delivery in the city.",
      "We print jewelry and dental models.",
      "Medical and architectural models are a specialty.",
      "Cosplay props and miniatures welcome.",
      "Over ten years of experience in additive manufacturing.",
      "I am a mechanical engineer with a degree in engineering.",
      "Professional service from an experienced team.",
      "Post-processing, sanding and painting available on request.",
      "We also offer finishing, polishing and laser cutting.",
      "Vapor smoothing and assembly of multi-part prints.",
      "Quality prints at a fair price.",
      "Message me with any questions.",
      "Printing since the early days of desktop machines.",
  };
  return s;
}

std::vector<MaterialCategory> compatible_materials(PrintProcess p) {
  using M = MaterialCategory;
  switch (p) {
    case PrintProcess::FDM:
      return {M::ABS,  M::PLA,          M::SpecialtyABS, M::SpecialtyPLA, M::PET,
              M::SpecialtyPET, M::PC,   M::SpecialtyPC,  M::Nylon,        M::SpecialtyNylon,
              M::Flexible, M::ASA,      M::Soluble,      M::Others};
    case PrintProcess::SLA:
      return {M::Resins};
    case PrintProcess::LaserSintering:
      return {M::Nylon, M::SpecialtyNylon, M::Flexible, M::Metals};
    case PrintProcess::Jetting:
      return {M::Resins, M::Others};
  }
  return {M::Others};
}

std::vector<double> resolutions_for(PrintProcess p) {
  switch (p) {
    case PrintProcess::FDM:
      return {50, 100, 150, 200, 250, 300};
    case PrintProcess::SLA:
      return {25, 50, 100};
    case PrintProcess::LaserSintering:
      return {60, 80, 100, 120};
    case PrintProcess::Jetting:
      return {16, 28, 32};
  }
  return {100};
}

template <class Key>
std::discrete_distribution<std::size_t> table_distribution(const std::map<Key, double>& mix,
                                                           std::vector<Key>& keys) {
  keys.clear();
  std::vector<double> w;
  for (const auto& [k, p] : mix) {
    keys.push_back(k);
    w.push_back(p);
  }
  return std::discrete_distribution<std::size_t>(w.begin(), w.end());
}

double clamp_rating(double r) { return std::clamp(r, 1.0, 5.0); }

}  // namespace

SynthConfig SynthConfig::defaults(Region region) {
  using M = MaterialCategory;
  using P = PrintProcess;
  SynthConfig c;
  c.region = region;
  if (region == Region::US) {
    c.process_mix = {{P::FDM, 0.84}, {P::SLA, 0.13}, {P::LaserSintering, 0.02}, {P::Jetting, 0.01}};
    c.material_mix = {{M::ABS, 0.14},     {M::PLA, 0.26},          {M::SpecialtyABS, 0.04},
                      {M::SpecialtyPLA, 0.10}, {M::PET, 0.08},     {M::SpecialtyPET, 0.015},
                      {M::PC, 0.02},      {M::SpecialtyPC, 0.01},  {M::Nylon, 0.04},
                      {M::SpecialtyNylon, 0.02}, {M::Flexible, 0.04}, {M::ASA, 0.015},
                      {M::Metals, 0.002}, {M::Resins, 0.15},       {M::Soluble, 0.025},
                      {M::Others, 0.043}};
    c.price_model.min_price = 2.36;
    c.price_model.max_price = 1956.0;
  } else {
    c.process_mix = {{P::FDM, 0.89}, {P::SLA, 0.10}, {P::LaserSintering, 0.007}, {P::Jetting, 0.003}};
    c.material_mix = {{M::ABS, 0.12},     {M::PLA, 0.30},          {M::SpecialtyABS, 0.04},
                      {M::SpecialtyPLA, 0.11}, {M::PET, 0.08},     {M::SpecialtyPET, 0.015},
                      {M::PC, 0.02},      {M::SpecialtyPC, 0.01},  {M::Nylon, 0.04},
                      {M::SpecialtyNylon, 0.02}, {M::Flexible, 0.04}, {M::ASA, 0.015},
                      {M::Metals, 0.002}, {M::Resins, 0.10},       {M::Soluble, 0.025},
                      {M::Others, 0.063}};
    c.price_model.min_price = 3.75;
    c.price_model.max_price = 2261.5;
  }
  auto& pm = c.price_model;
  pm.intercept = 2.0;
  pm.log_cost = 0.1;
  pm.process_weight = 1.0;
  pm.material_weight = 1.4;
  pm.inv_resolution = 14.0;
  pm.noise_sd = 0.15;
  pm.process_offset = {{P::FDM, 0.0}, {P::SLA, 0.35}, {P::LaserSintering, 0.9}, {P::Jetting, 0.8}};
  pm.material_offset = {{M::ABS, 0.0},          {M::PLA, -0.15},        {M::SpecialtyABS, 0.45},
                        {M::SpecialtyPLA, 0.3}, {M::PET, 0.2},          {M::SpecialtyPET, 0.55},
                        {M::PC, 0.6},           {M::SpecialtyPC, 0.8},  {M::Nylon, 0.7},
                        {M::SpecialtyNylon, 1.0}, {M::Flexible, 0.65},  {M::ASA, 0.4},
                        {M::Metals, 2.8},       {M::Resins, 0.25},      {M::Soluble, 0.6},
                        {M::Others, 0.9}};
  return c;
}

void SynthConfig::validate() const {
  if (n_listings == 0) throw ConfigError("n_listings: corpus would be empty");
  auto check_mix = [](const auto& mix, const char* name) {
    if (mix.empty()) throw ConfigError(std::string(name) + ": empty probability table");
    double sum = 0;
    for (const auto& [k, p] : mix) {
      if (!(p >= 0)) throw ConfigError(std::string(name) + ": negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError(std::string(name) + ": probabilities sum to " + fmt::format("{}", sum));
  };
  check_mix(process_mix, "process_mix");
  check_mix(material_mix, "material_mix");
  const auto& pm = price_model;
  if (!(pm.noise_sd >= 0)) throw ConfigError("price_model.noise_sd: must be non-negative");
  if (!(pm.min_price > 0 && pm.max_price > pm.min_price))
    throw ConfigError("price_model.min_price/max_price: need 0 < min_price < max_price");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::ordered_json j;
  j["n_listings"] = n_listings;
  j["region"] = std::string(to_string(region));
  j["seed"] = seed;
  nlohmann::ordered_json pmix, mmix, poff, moff;
  for (const auto& [k, v] : process_mix) pmix[std::string(features::to_string(k))] = v;
  for (const auto& [k, v] : material_mix) mmix[std::string(features::to_string(k))] = v;
  for (const auto& [k, v] : price_model.process_offset) poff[std::string(features::to_string(k))] = v;
  for (const auto& [k, v] : price_model.material_offset) moff[std::string(features::to_string(k))] = v;
  j["process_mix"] = pmix;
  j["material_mix"] = mmix;
  j["price_model"] = {{"intercept", price_model.intercept},
                      {"log_cost", price_model.log_cost},
                      {"process_weight", price_model.process_weight},
                      {"material_weight", price_model.material_weight},
                      {"inv_resolution", price_model.inv_resolution},
                      {"noise_sd", price_model.noise_sd},
                      {"process_offset", poff},
                      {"material_offset", moff},
                      {"min_price", price_model.min_price},
                      {"max_price", price_model.max_price}};
  return nlohmann::json::parse(j.dump());
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synth config: expected a JSON object");
  Region region = Region::US;
  if (j.contains("region")) {
    if (!j["region"].is_string()) throw ConfigError("region: expected a string");
    region = region_from_string(j["region"].get<std::string>());
  }
  SynthConfig c = defaults(region);
  auto number = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key + ": expected a number");
    return v.get<double>();
  };
  auto process_table = [&](const nlohmann::json& v, const std::string& key) {
    if (!v.is_object()) throw ConfigError(key + ": expected an object");
    std::map<PrintProcess, double> out;
    for (const auto& [name, p] : v.items()) {
      auto proc = features::print_process_from_string(name);
      if (!proc) throw ConfigError(key + "." + name + ": unknown process");
      out[*proc] = number(p, key + "." + name);
    }
    return out;
  };
  auto material_table = [&](const nlohmann::json& v, const std::string& key) {
    if (!v.is_object()) throw ConfigError(key + ": expected an object");
    std::map<MaterialCategory, double> out;
    for (const auto& [name, p] : v.items()) {
      auto cat = features::material_category_from_string(name);
      if (!cat) throw ConfigError(key + "." + name + ": unknown material category");
      out[*cat] = number(p, key + "." + name);
    }
    return out;
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "region") continue;
    if (key == "n_listings") {
      if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError("n_listings: expected a non-negative integer");
      c.n_listings = v.get<std::size_t>();
    } else if (key == "seed") {
      if (!v.is_number_integer()) throw ConfigError("seed: expected an integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "process_mix") {
      c.process_mix = process_table(v, key);
    } else if (key == "material_mix") {
      c.material_mix = material_table(v, key);
    } else if (key == "price_model") {
      if (!v.is_object()) throw ConfigError("price_model: expected an object");
      auto& pm = c.price_model;
      for (const auto& [pk, pv] : v.items()) {
        const std::string full = "price_model." + pk;
        if (pk == "intercept") pm.intercept = number(pv, full);
        else if (pk == "log_cost") pm.log_cost = number(pv, full);
        else if (pk == "process_weight") pm.process_weight = number(pv, full);
        else if (pk == "material_weight") pm.material_weight = number(pv, full);
        else if (pk == "inv_resolution") pm.inv_resolution = number(pv, full);
        else if (pk == "noise_sd") pm.noise_sd = number(pv, full);
        else if (pk == "min_price") pm.min_price = number(pv, full);
        else if (pk == "max_price") pm.max_price = number(pv, full);
        else if (pk == "process_offset") {
          for (const auto& [k2, v2] : process_table(pv, full)) pm.process_offset[k2] = v2;
        } else if (pk == "material_offset") {
          for (const auto& [k2, v2] : material_table(pv, full)) pm.material_offset[k2] = v2;
        } else {
          throw ConfigError(full + ": unknown key");
        }
      }
    } else {
      throw ConfigError(key + ": unknown key");
    }
  }
  return c;
}

std::vector<RawListing> generate_synthetic(const SynthConfig& cfg, const features::Catalog& catalog) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<PrintProcess> processes;
  auto process_dist = table_distribution(cfg.process_mix, processes);

  // Printer choice within a process favours cheaper machines (weight ~ cost^-1/2).
  std::map<PrintProcess, std::vector<const features::PrinterTable::Entry*>> printers;
  std::map<PrintProcess, std::discrete_distribution<std::size_t>> printer_dist;
  for (const auto& e : catalog.printers.entries()) printers[e.info.process].push_back(&e);
  for (auto& [p, list] : printers) {
    std::vector<double> w;
    for (const auto* e : list) w.push_back(1.0 / std::sqrt(e->info.cost));
    printer_dist[p] = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }
  for (const auto& [p, prob] : cfg.process_mix)
    if (prob > 0 && !printers.count(p))
      throw ConfigError("process_mix." + std::string(features::to_string(p)) +
                        ": printer table has no printer for this process");

  std::map<PrintProcess, std::vector<MaterialCategory>> material_keys;
  std::map<PrintProcess, std::discrete_distribution<std::size_t>> material_dist;
  for (auto p : features::kPrintProcesses) {
    auto compat = compatible_materials(p);
    std::vector<double> w;
    double total = 0;
    for (auto m : compat) {
      auto it = cfg.material_mix.find(m);
      w.push_back(it == cfg.material_mix.end() ? 0.0 : it->second);
      total += w.back();
    }
    if (total <= 0) std::fill(w.begin(), w.end(), 1.0);
    material_keys[p] = compat;
    material_dist[p] = std::discrete_distribution<std::size_t>(w.begin(), w.end());
  }

  const auto& city_list = cities(cfg.region);
  std::vector<double> city_w;
  for (const auto& c : city_list) city_w.push_back(c.weight);
  std::discrete_distribution<std::size_t> city_dist(city_w.begin(), city_w.end());
  const auto& sentences = description_sentences();
  const auto& pm = cfg.price_model;
  const std::string prefix(to_string(cfg.region));

  std::vector<RawListing> out;
  out.reserve(cfg.n_listings);
  std::size_t supplier = 0;
  while (out.size() < cfg.n_listings) {
    RawListing base;
    base.region = cfg.region;
    const auto& city = city_list[city_dist(rng)];
    base.latitude = std::clamp(city.lat + 0.8 * gauss(rng), -90.0, 90.0);
    base.longitude = std::clamp(city.lon + 1.0 * gauss(rng), -180.0, 180.0);
    if (unit(rng) < 0.15) {
      base.num_reviews = 0;
    } else {
      base.num_reviews = 1 + static_cast<int>(-25.0 * std::log(1.0 - unit(rng)));
      const double level = clamp_rating(5.0 - std::gamma_distribution<double>(1.5, 0.25)(rng));
      std::array<double, 4> sub{};
      for (double& s : sub) s = clamp_rating(level + 0.05 * gauss(rng));
      base.print_quality_rating = sub[0];
      base.speed_rating = sub[1];
      base.service_rating = sub[2];
      base.communication_rating = sub[3];
      base.avg_rating = (sub[0] + sub[1] + sub[2] + sub[3]) / 4.0;
    }
    base.avg_response_time = 0.1 + -6.0 * std::log(1.0 - unit(rng));
    base.days_since_activation = 14 + static_cast<int>(unit(rng) * 1786.0);
    base.num_machines = 1 + std::min(29, static_cast<int>(std::geometric_distribution<int>(0.4)(rng)));
    base.registered_business = unit(rng) < 0.35;
    base.num_sample_images = static_cast<int>(-8.0 * std::log(1.0 - unit(rng)));
    if (unit(rng) >= 0.1) {
      const int n_sent = 1 + static_cast<int>(unit(rng) * 4.0);
      for (int s = 0; s < n_sent; ++s) {
        if (!base.description_text.empty()) base.description_text += ' ';
        base.description_text += sentences[static_cast<std::size_t>(unit(rng) * sentences.size())];
      }
    }

    const int n_offers = 1 + std::geometric_distribution<int>(0.1)(rng);
    for (int k = 0; k < n_offers && out.size() < cfg.n_listings; ++k) {
      RawListing l = base;
      l.listing_id = fmt::format("{}-{:05d}-{:02d}", prefix, supplier, k);
      const PrintProcess process = processes[process_dist(rng)];
      const auto* printer = printers[process][printer_dist[process](rng)];
      l.printer_model = printer->model;
      const MaterialCategory mat = material_keys[process][material_dist[process](rng)];
      const auto names = catalog.materials.names_for(mat);
      l.material_name = names.empty() ? std::string(features::to_string(mat))
                                      : names[static_cast<std::size_t>(unit(rng) * names.size())];
      const auto res = resolutions_for(process);
      l.resolution = res[static_cast<std::size_t>(unit(rng) * res.size())];
      l.order_completion_days =
          1.0 + std::floor(-3.0 * std::log(1.0 - unit(rng))) + (process == PrintProcess::FDM ? 0 : 2);

      auto offset = [](const auto& table, auto key) {
        auto it = table.find(key);
        return it == table.end() ? 0.0 : it->second;
      };
      const double score = pm.intercept + pm.log_cost * std::log(printer->info.cost) +
                           pm.process_weight * offset(pm.process_offset, process) +
                           pm.material_weight * offset(pm.material_offset, mat) +
                           pm.inv_resolution / l.resolution;
      double price = 0;
      for (int attempt = 0; attempt < 64; ++attempt) {
        price = std::exp(score + pm.noise_sd * gauss(rng));
        if (price >= pm.min_price && price <= pm.max_price) break;
      }
      l.price = std::clamp(price, pm.min_price, pm.max_price);
      out.push_back(std::move(l));
    }
    ++supplier;
  }
  return out;
}

// -- summaries ---------------------------------------------------------------

nlohmann::json CorpusStats::to_json() const {
  nlohmann::json j;
  j["listings"] = listings;
  for (const auto& [name, s] : numeric)
    j["numeric"][name] = {{"count", s.count}, {"min", s.min},     {"q1", s.q1},  {"median", s.median},
                          {"q3", s.q3},       {"max", s.max},     {"mean", s.mean}};
  for (const auto& [name, table] : frequencies) j["frequencies"][name] = table;
  return j;
}

CorpusStats corpus_stats(const std::vector<RawListing>& listings, const features::Catalog& catalog) {
  if (listings.empty()) throw InfeasibleError("corpus_stats: empty corpus");
  CorpusStats st;
  st.listings = listings.size();
  std::map<std::string, std::vector<double>> cols;
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& l : listings) {
    if (l.avg_rating) cols["avg_rating"].push_back(*l.avg_rating);
    cols["num_reviews"].push_back(l.num_reviews);
    cols["avg_response_time_hours"].push_back(l.avg_response_time);
    cols["days_since_activation"].push_back(l.days_since_activation);
    cols["num_machines"].push_back(l.num_machines);
    cols["num_sample_images"].push_back(l.num_sample_images);
    cols["resolution_microns"].push_back(l.resolution);
    cols["order_completion_days"].push_back(l.order_completion_days);
    cols["price_usd"].push_back(l.price);
    cols["latitude"].push_back(l.latitude);
    cols["longitude"].push_back(l.longitude);
    counts["region"][std::string(to_string(l.region))]++;
    counts["registered_business"][l.registered_business ? "true" : "false"]++;
    const auto mat = catalog.materials.categorize(l.material_name);
    counts["material_category"][std::string(features::to_string(mat))]++;
    counts["material_family"][features::is_abs_pla_family(mat) ? "ABS+PLA" : "other"]++;
    if (catalog.printers.contains(l.printer_model)) {
      const auto& info = catalog.printers.lookup(l.printer_model);
      counts["process"][std::string(features::to_string(info.process))]++;
      cols["printer_cost_usd"].push_back(info.cost);
    } else {
      counts["process"]["unknown"]++;
    }
  }
  for (auto& [name, values] : cols) {
    std::sort(values.begin(), values.end());
    NumericSummary s;
    s.count = values.size();
    s.min = values.front();
    s.max = values.back();
    s.q1 = quantile_sorted(values, 0.25);
    s.median = quantile_sorted(values, 0.5);
    s.q3 = quantile_sorted(values, 0.75);
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    st.numeric[name] = s;
  }
  for (const auto& [name, table] : counts)
    for (const auto& [level, n] : table)
      st.frequencies[name][level] = static_cast<double>(n) / static_cast<double>(listings.size());
  return st;
}

}  // namespace pricegrid::ingest
