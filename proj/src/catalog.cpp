#include "pricegrid/catalog.hpp"

#include <algorithm>
#include <set>

namespace pricegrid::features {

namespace {

constexpr std::array<std::string_view, 16> kMaterialNames = {
    "ABS",         "PLA",   "SpecialtyABS",   "SpecialtyPLA", "PET",      "SpecialtyPET",
    "PC",          "SpecialtyPC", "Nylon",    "SpecialtyNylon", "Flexible", "ASA",
    "Metals",      "Resins", "Soluble",       "Others"};

constexpr std::array<std::string_view, 4> kProcessNames = {"FDM", "SLA", "LaserSintering",
                                                           "Jetting"};

constexpr std::array<std::string_view, 5> kKeywordNames = {
    "DesignServices", "Logistics", "Specialties", "Experience", "AdditionalServices"};

}  // namespace

std::string_view to_string(MaterialCategory c) { return kMaterialNames[static_cast<std::size_t>(c)]; }

std::optional<MaterialCategory> material_category_from_string(std::string_view s) {
  const std::string k = normalize_key(s);
  for (std::size_t i = 0; i < kMaterialNames.size(); ++i)
    if (normalize_key(kMaterialNames[i]) == k) return static_cast<MaterialCategory>(i);
  return std::nullopt;
}

bool is_abs_pla_family(MaterialCategory c) {
  return c == MaterialCategory::ABS || c == MaterialCategory::PLA ||
         c == MaterialCategory::SpecialtyABS || c == MaterialCategory::SpecialtyPLA;
}

std::string_view to_string(PrintProcess p) { return kProcessNames[static_cast<std::size_t>(p)]; }

std::optional<PrintProcess> print_process_from_string(std::string_view s) {
  const std::string k = normalize_key(s);
  for (std::size_t i = 0; i < kProcessNames.size(); ++i)
    if (normalize_key(kProcessNames[i]) == k) return static_cast<PrintProcess>(i);
  return std::nullopt;
}

std::string_view to_string(KeywordCategory c) { return kKeywordNames[static_cast<std::size_t>(c)]; }

// -- materials ---------------------------------------------------------------

void MaterialTable::add(std::string_view name, MaterialCategory category) {
  const std::string key = normalize_key(name);
  if (key.empty()) throw ConfigError("material table: empty material name");
  auto [it, inserted] = entries_.emplace(key, category);
  if (!inserted) {
    if (it->second != category)
      throw ConfigError("material table: '" + key + "' mapped to two categories");
    return;
  }
  order_.emplace_back(std::string(name), category);
}

MaterialCategory MaterialTable::categorize(std::string_view name) const {
  auto it = entries_.find(normalize_key(name));
  return it == entries_.end() ? MaterialCategory::Others : it->second;
}

std::vector<std::string> MaterialTable::names_for(MaterialCategory category) const {
  std::vector<std::string> out;
  for (const auto& [name, c] : order_)
    if (c == category) out.push_back(name);
  return out;
}

const MaterialTable& MaterialTable::defaults() {
  static const MaterialTable table = [] {
    using M = MaterialCategory;
    MaterialTable t;
    const std::vector<std::pair<const char*, M>> rows = {
        {"ABS", M::ABS},
        {"Acrylonitrile Butadiene Styrene", M::ABS},
        {"ABS Plastic", M::ABS},
        {"PLA", M::PLA},
        {"Polylactic Acid", M::PLA},
        {"PLA Plastic", M::PLA},
        {"ABS-ESD", M::SpecialtyABS},
        {"ABS Carbon Fiber", M::SpecialtyABS},
        {"ABS Flame Retardant", M::SpecialtyABS},
        {"ABS-M30", M::SpecialtyABS},
        {"PLA+", M::SpecialtyPLA},
        {"Silk PLA", M::SpecialtyPLA},
        {"Wood PLA", M::SpecialtyPLA},
        {"PLA Carbon Fiber", M::SpecialtyPLA},
        {"Glow in the Dark PLA", M::SpecialtyPLA},
        {"Tough PLA", M::SpecialtyPLA},
        {"Bronze Fill PLA", M::SpecialtyPLA},
        {"PET", M::PET},
        {"PETG", M::PET},
        {"Polyethylene Terephthalate", M::PET},
        {"PETG Carbon Fiber", M::SpecialtyPET},
        {"PETT", M::SpecialtyPET},
        {"T-Glase", M::SpecialtyPET},
        {"PC", M::PC},
        {"Polycarbonate", M::PC},
        {"PC-ABS", M::SpecialtyPC},
        {"PC-ISO", M::SpecialtyPC},
        {"Polycarbonate Carbon Fiber", M::SpecialtyPC},
        {"Nylon", M::Nylon},
        {"Nylon 12", M::Nylon},
        {"PA12", M::Nylon},
        {"PA11", M::Nylon},
        {"Polyamide", M::Nylon},
        {"Carbon Fiber Nylon", M::SpecialtyNylon},
        {"Glass Filled Nylon", M::SpecialtyNylon},
        {"Alumide", M::SpecialtyNylon},
        {"Onyx", M::SpecialtyNylon},
        {"TPU", M::Flexible},
        {"TPE", M::Flexible},
        {"Thermoplastic Elastomer", M::Flexible},
        {"Polyurethane", M::Flexible},
        {"NinjaFlex", M::Flexible},
        {"ASA", M::ASA},
        {"Acrylonitrile Styrene Acrylate", M::ASA},
        {"Stainless Steel", M::Metals},
        {"Aluminum AlSi10Mg", M::Metals},
        {"Titanium Ti6Al4V", M::Metals},
        {"Inconel 718", M::Metals},
        {"Maraging Steel", M::Metals},
        {"Cobalt Chrome", M::Metals},
        {"Standard Resin", M::Resins},
        {"Tough Resin", M::Resins},
        {"Castable Resin", M::Resins},
        {"Dental Resin", M::Resins},
        {"High Temp Resin", M::Resins},
        {"Clear Resin", M::Resins},
        {"Flexible Resin", M::Resins},
        {"Photopolymer", M::Resins},
        {"VeroClear", M::Resins},
        {"High Impact Polystyrene", M::Soluble},
        {"HIPS", M::Soluble},
        {"Polyvinyl Alcohol", M::Soluble},
        {"PVA", M::Soluble},
        {"Full Color Sandstone", M::Others},
        {"Wax", M::Others},
        {"Ceramic", M::Others},
    };
    for (const auto& [name, c] : rows) t.add(name, c);
    return t;
  }();
  return table;
}

nlohmann::json MaterialTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& [name, c] : order_)
    rows.push_back({{"name", name}, {"category", std::string(to_string(c))}});
  return {{"materials", rows}};
}

MaterialTable MaterialTable::from_json(const nlohmann::json& j) {
  if (!j.contains("materials") || !j["materials"].is_array())
    throw SchemaError("material table: missing 'materials' array");
  MaterialTable t;
  for (const auto& row : j["materials"]) {
    if (!row.contains("name") || !row.contains("category"))
      throw SchemaError("material table: entries need 'name' and 'category'");
    const auto cat = material_category_from_string(row["category"].get<std::string>());
    if (!cat)
      throw ConfigError("material table: unknown category '" +
                        row["category"].get<std::string>() + "'");
    t.add(row["name"].get<std::string>(), *cat);
  }
  return t;
}

MaterialCategory categorize_material(std::string_view name, const MaterialTable& table) {
  return table.categorize(name);
}

// -- printers ----------------------------------------------------------------

void PrinterTable::add(std::string_view model, PrinterInfo info) {
  const std::string key = normalize_key(model);
  if (key.empty()) throw ConfigError("printer table: empty model name");
  if (!(info.cost >= kMinPrinterCost && info.cost <= kMaxPrinterCost))
    throw ConfigError("printer table: cost of '" + std::string(model) + "' outside [175, 1.5e6]");
  if (index_.count(key)) throw ConfigError("printer table: duplicate model '" + key + "'");
  index_.emplace(key, entries_.size());
  entries_.push_back({std::string(model), info});
}

const PrinterInfo& PrinterTable::lookup(std::string_view model) const {
  auto it = index_.find(normalize_key(model));
  if (it == index_.end())
    throw LookupError(std::string(model), "unknown printer model '" + std::string(model) + "'");
  return entries_[it->second].info;
}

bool PrinterTable::contains(std::string_view model) const {
  return index_.count(normalize_key(model)) != 0;
}

std::vector<std::string> PrinterTable::models() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.model);
  return out;
}

const PrinterTable& PrinterTable::defaults() {
  static const PrinterTable table = [] {
    using P = PrintProcess;
    PrinterTable t;
    const std::vector<std::tuple<const char*, double, P>> rows = {
        {"Monoprice Select Mini", 175, P::FDM},
        {"Anet A8", 185, P::FDM},
        {"Creality Ender 3", 229, P::FDM},
        {"Anycubic i3 Mega", 299, P::FDM},
        {"Creality CR-10", 399, P::FDM},
        {"Wanhao Duplicator i3", 420, P::FDM},
        {"Prusa i3 MK2S", 699, P::FDM},
        {"Prusa i3 MK3", 749, P::FDM},
        {"FlashForge Creator Pro", 899, P::FDM},
        {"FlashForge Dreamer", 1199, P::FDM},
        {"LulzBot Mini", 1250, P::FDM},
        {"Zortrax M200", 1990, P::FDM},
        {"MakerBot Replicator 2", 2199, P::FDM},
        {"Ultimaker 2+", 2499, P::FDM},
        {"LulzBot TAZ 6", 2500, P::FDM},
        {"BCN3D Sigma", 2995, P::FDM},
        {"Raise3D N2 Plus", 3499, P::FDM},
        {"Ultimaker 3", 3495, P::FDM},
        {"Ultimaker 3 Extended", 4295, P::FDM},
        {"Markforged Mark Two", 13499, P::FDM},
        {"Stratasys uPrint SE Plus", 25000, P::FDM},
        {"Stratasys Fortus 450mc", 185000, P::FDM},
        {"Anycubic Photon", 540, P::SLA},
        {"Peopoly Moai", 1295, P::SLA},
        {"XYZprinting Nobel 1.0", 1499, P::SLA},
        {"Formlabs Form 1+", 2799, P::SLA},
        {"Formlabs Form 2", 3499, P::SLA},
        {"DWS XFAB 2000", 5990, P::SLA},
        {"3D Systems ProJet 6000", 150000, P::SLA},
        {"Sinterit Lisa", 9990, P::LaserSintering},
        {"Formlabs Fuse 1", 18500, P::LaserSintering},
        {"EOS Formiga P 110", 250000, P::LaserSintering},
        {"EOS P 396", 450000, P::LaserSintering},
        {"3D Systems ProX DMP 320", 950000, P::LaserSintering},
        {"EOS M 290", 1000000, P::LaserSintering},
        {"Stratasys Objet30 Pro", 40000, P::Jetting},
        {"3D Systems ProJet 660Pro", 60000, P::Jetting},
        {"HP Jet Fusion 4200", 300000, P::Jetting},
        {"Stratasys J750", 330000, P::Jetting},
    };
    for (const auto& [model, cost, process] : rows) t.add(model, {cost, process});
    return t;
  }();
  return table;
}

nlohmann::json PrinterTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries_)
    rows.push_back({{"model", e.model},
                    {"cost_usd", e.info.cost},
                    {"process", std::string(to_string(e.info.process))}});
  return {{"printers", rows}};
}

PrinterTable PrinterTable::from_json(const nlohmann::json& j) {
  if (!j.contains("printers") || !j["printers"].is_array())
    throw SchemaError("printer table: missing 'printers' array");
  PrinterTable t;
  for (const auto& row : j["printers"]) {
    if (!row.contains("model") || !row.contains("cost_usd") || !row.contains("process"))
      throw SchemaError("printer table: entries need 'model', 'cost_usd' and 'process'");
    const auto process = print_process_from_string(row["process"].get<std::string>());
    if (!process)
      throw ConfigError("printer table: unknown process '" + row["process"].get<std::string>() +
                        "'");
    t.add(row["model"].get<std::string>(), {row["cost_usd"].get<double>(), *process});
  }
  return t;
}

const PrinterInfo& lookup_printer(std::string_view model, const PrinterTable& table) {
  return table.lookup(model);
}

// -- keywords ----------------------------------------------------------------

KeywordDictionary::KeywordDictionary(const std::array<std::vector<std::string>, 5>& keywords) {
  std::map<Phrase, std::size_t> owner;
  for (std::size_t c = 0; c < keywords.size(); ++c) {
    for (const auto& kw : keywords[c]) {
      Phrase phrase = tokenize(kw);
      if (phrase.empty()) throw ConfigError("keyword dictionary: empty keyword");
      auto [it, inserted] = owner.emplace(phrase, c);
      if (!inserted) {
        if (it->second != c)
          throw ConfigError("keyword dictionary: '" + kw + "' appears in both " +
                            std::string(kKeywordNames[it->second]) + " and " +
                            std::string(kKeywordNames[c]));
        continue;
      }
      phrases_[c].push_back(std::move(phrase));
    }
  }
}

const KeywordDictionary& KeywordDictionary::defaults() {
  static const KeywordDictionary dict({{
      {"design", "designing", "scanning", "3d scanning", "modelling", "modeling", "3d modeling",
       "cad", "prototyping", "reverse engineering"},
      {"turnaround", "turnaround time", "pick-up", "pickup", "free shipping", "shipping",
       "delivery", "fast delivery", "same day", "next day", "express"},
      {"jeweler", "jewelry", "dental", "medical", "architecture", "architectural", "miniatures",
       "cosplay", "automotive", "aerospace", "figurines"},
      {"years of experience", "experience", "experienced", "engineer", "engineering",
       "professional", "profession", "education", "degree", "phd"},
      {"finishing", "polishing", "laser cutting", "painting", "sanding", "post-processing",
       "assembly", "cnc", "vapor smoothing"},
  }});
  return dict;
}

nlohmann::json KeywordDictionary::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t c = 0; c < phrases_.size(); ++c) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& phrase : phrases_[c]) {
      std::string s;
      for (const auto& tok : phrase) s += (s.empty() ? "" : " ") + tok;
      list.push_back(s);
    }
    j[std::string(kKeywordNames[c])] = list;
  }
  return {{"keywords", j}};
}

KeywordDictionary KeywordDictionary::from_json(const nlohmann::json& j) {
  if (!j.contains("keywords") || !j["keywords"].is_object())
    throw SchemaError("keyword dictionary: missing 'keywords' object");
  std::array<std::vector<std::string>, 5> lists;
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < kKeywordNames.size(); ++c) {
    const std::string key(kKeywordNames[c]);
    if (!j["keywords"].contains(key)) {
      missing.push_back(key);
      continue;
    }
    lists[c] = j["keywords"][key].get<std::vector<std::string>>();
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
    throw SchemaError("keyword dictionary: missing categories: " + names);
  }
  return KeywordDictionary(lists);
}

}  // namespace pricegrid::features
