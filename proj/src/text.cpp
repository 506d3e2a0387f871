#include <algorithm>
#include <cctype>

#include "pricegrid/catalog.hpp"

namespace pricegrid::features {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

DescriptionCounts description_vector(std::string_view text, const KeywordDictionary& dict) {
  DescriptionCounts counts{};
  const auto tokens = tokenize(text);
  if (tokens.empty()) return counts;

  std::size_t longest = 0;
  for (auto c : kKeywordCategories)
    for (const auto& p : dict.phrases(c)) longest = std::max(longest, p.size());

  std::size_t pos = 0;
  while (pos < tokens.size()) {
    std::size_t best_len = 0;
    std::size_t best_cat = 0;
    for (std::size_t c = 0; c < kKeywordCategories.size(); ++c) {
      for (const auto& phrase : dict.phrases(kKeywordCategories[c])) {
        if (phrase.size() <= best_len || pos + phrase.size() > tokens.size()) continue;
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<long>(pos))) {
          best_len = phrase.size();
          best_cat = c;
          if (best_len == longest) break;
        }
      }
    }
    if (best_len == 0) {
      ++pos;
    } else {
      ++counts[best_cat];
      pos += best_len;
    }
  }
  return counts;
}

}  // namespace pricegrid::features
