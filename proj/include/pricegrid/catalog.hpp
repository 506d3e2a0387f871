#pragma once

// Lookup tables that turn free-form listing strings into categories:
// material names, printer models, and description keywords.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pricegrid/common.hpp"

namespace pricegrid::features {

enum class MaterialCategory {
  ABS,
  PLA,
  SpecialtyABS,
  SpecialtyPLA,
  PET,
  SpecialtyPET,
  PC,
  SpecialtyPC,
  Nylon,
  SpecialtyNylon,
  Flexible,
  ASA,
  Metals,
  Resins,
  Soluble,
  Others,
};

inline constexpr std::array<MaterialCategory, 16> kMaterialCategories = {
    MaterialCategory::ABS,          MaterialCategory::PLA,      MaterialCategory::SpecialtyABS,
    MaterialCategory::SpecialtyPLA, MaterialCategory::PET,      MaterialCategory::SpecialtyPET,
    MaterialCategory::PC,           MaterialCategory::SpecialtyPC, MaterialCategory::Nylon,
    MaterialCategory::SpecialtyNylon, MaterialCategory::Flexible, MaterialCategory::ASA,
    MaterialCategory::Metals,       MaterialCategory::Resins,   MaterialCategory::Soluble,
    MaterialCategory::Others,
};

std::string_view to_string(MaterialCategory c);
std::optional<MaterialCategory> material_category_from_string(std::string_view s);

/// True for ABS, PLA and their specialty formulations.
bool is_abs_pla_family(MaterialCategory c);

enum class PrintProcess { FDM, SLA, LaserSintering, Jetting };

inline constexpr std::array<PrintProcess, 4> kPrintProcesses = {
    PrintProcess::FDM, PrintProcess::SLA, PrintProcess::LaserSintering, PrintProcess::Jetting};

std::string_view to_string(PrintProcess p);
std::optional<PrintProcess> print_process_from_string(std::string_view s);

struct PrinterInfo {
  double cost = 0.0;  // USD
  PrintProcess process = PrintProcess::FDM;

  bool operator==(const PrinterInfo&) const = default;
};

inline constexpr double kMinPrinterCost = 175.0;
inline constexpr double kMaxPrinterCost = 1.5e6;

/// Material name -> category. Keys are normalized (trimmed, lowercase).
class MaterialTable {
 public:
  MaterialTable() = default;

  void add(std::string_view name, MaterialCategory category);
  MaterialCategory categorize(std::string_view name) const;
  /// Names registered for a category, in insertion order.
  std::vector<std::string> names_for(MaterialCategory category) const;
  std::size_t size() const { return entries_.size(); }

  static const MaterialTable& defaults();

  nlohmann::json to_json() const;
  static MaterialTable from_json(const nlohmann::json& j);

 private:
  std::map<std::string, MaterialCategory> entries_;
  std::vector<std::pair<std::string, MaterialCategory>> order_;
};

/// Printer model -> cost and process. Lookups are normalized; a miss is an error.
class PrinterTable {
 public:
  struct Entry {
    std::string model;  // display name
    PrinterInfo info;
  };

  PrinterTable() = default;

  void add(std::string_view model, PrinterInfo info);
  const PrinterInfo& lookup(std::string_view model) const;
  bool contains(std::string_view model) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<std::string> models() const;

  static const PrinterTable& defaults();

  nlohmann::json to_json() const;
  static PrinterTable from_json(const nlohmann::json& j);

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

MaterialCategory categorize_material(std::string_view name, const MaterialTable& table);
const PrinterInfo& lookup_printer(std::string_view model, const PrinterTable& table);

enum class KeywordCategory { DesignServices, Logistics, Specialties, Experience, AdditionalServices };

inline constexpr std::array<KeywordCategory, 5> kKeywordCategories = {
    KeywordCategory::DesignServices, KeywordCategory::Logistics, KeywordCategory::Specialties,
    KeywordCategory::Experience, KeywordCategory::AdditionalServices};

std::string_view to_string(KeywordCategory c);

/// Five keyword sets. Keywords are stored as normalized token sequences; the sets must be
/// disjoint after normalization.
class KeywordDictionary {
 public:
  using Phrase = std::vector<std::string>;

  KeywordDictionary() = default;
  explicit KeywordDictionary(const std::array<std::vector<std::string>, 5>& keywords);

  const std::vector<Phrase>& phrases(KeywordCategory c) const {
    return phrases_[static_cast<std::size_t>(c)];
  }

  static const KeywordDictionary& defaults();

  nlohmann::json to_json() const;
  static KeywordDictionary from_json(const nlohmann::json& j);

 private:
  std::array<std::vector<Phrase>, 5> phrases_;
};

/// Splits text into lowercase alphanumeric tokens.
std::vector<std::string> tokenize(std::string_view text);

using DescriptionCounts = std::array<int, 5>;

/// Keyword occurrences per category. Matching is greedy longest-phrase-first over the token
/// stream; matched tokens are consumed so nested phrases are not double counted.
DescriptionCounts description_vector(std::string_view text, const KeywordDictionary& dict);

/// Tables needed to derive features from a raw listing.
struct Catalog {
  MaterialTable materials = MaterialTable::defaults();
  PrinterTable printers = PrinterTable::defaults();
  KeywordDictionary keywords = KeywordDictionary::defaults();
};

}  // namespace pricegrid::features
