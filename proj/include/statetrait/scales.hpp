#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "statetrait/extraction.hpp"
#include "statetrait/providers.hpp"

namespace statetrait::scales {

struct ScaleItem {
  std::string id;
  std::string text;
  bool reverse_scored = false;
};

struct Dimension {
  std::string name;
  std::vector<ScaleItem> items;
};

struct Framework {
  std::string name;   ///< BFI | SVS | SDT | DOSPERT
  std::string title;  ///< display title, e.g. "Big Five"
  double response_min = 1.0;
  double response_max = 5.0;
  std::vector<Dimension> dimensions;
};

struct ScaleRegistry {
  std::vector<Framework> frameworks;

  std::size_t total_dimensions() const;
  std::size_t total_items() const;
  /// Dimension names in registry order.
  std::vector<std::string> dimension_names() const;
  const Framework& framework_of(std::string_view dimension) const;
  const Framework* find_framework(std::string_view name) const;
  const Dimension& dimension(std::string_view name) const;
};

/// Validates ids, ranges and dimension uniqueness. Throws ConfigError.
ScaleRegistry load_registry(const nlohmann::json& doc);
ScaleRegistry load_registry_file(const std::string& path);
ScaleRegistry default_registry();
nlohmann::json to_json(const ScaleRegistry& r);

/// Replaces a framework's response range (e.g. DOSPERT 1-7).
void set_response_range(ScaleRegistry& r, std::string_view framework, double lo, double hi);

inline double reverse_score(double r, double lo, double hi) { return lo + hi - r; }

struct ItemAssessment {
  std::map<std::string, double> responses;
  std::vector<std::string> warnings;  ///< one per clamped item
};

std::string assessment_prompt(const extraction::FeatureVector& features, const ScaleRegistry& registry);

/// One structured call per feature vector. Out-of-range answers are clamped with a
/// warning; non-numeric or missing items survive one repair then raise AssessmentError.
ItemAssessment assess_items(const extraction::FeatureVector& features, const ScaleRegistry& registry,
                            providers::CompletionProvider& provider, const providers::RetryPolicy& retry = {});

struct RawProfile {
  std::string post_id;
  extraction::Method method = extraction::Method::Lex;
  std::vector<std::string> dimensions;
  std::vector<double> scores;

  double at(std::string_view dimension) const;
};

/// Subscale means with reversal applied. Missing items raise ScoringError.
RawProfile score_subscales(const std::map<std::string, double>& item_scores, const ScaleRegistry& registry,
                           extraction::Method method = extraction::Method::Lex, std::string post_id = {});

}  // namespace statetrait::scales
