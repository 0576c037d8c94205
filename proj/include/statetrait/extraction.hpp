#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "statetrait/providers.hpp"

namespace statetrait::extraction {

enum class Method { Lex, Sem };
std::string to_string(Method m);
Method parse_method(std::string_view s);

struct LexiconEntry {
  std::string category;
  double weight = 1.0;
  std::string pos;  ///< accepted, not used for matching
};

/// Terms are lowercase single tokens; a trailing '*' makes a prefix pattern.
struct LexiconDictionary {
  std::string name;
  std::map<std::string, std::vector<LexiconEntry>> entries;

  std::vector<std::string> categories() const;  ///< sorted, unique
  double max_weight() const;
};

LexiconDictionary load_lexicon(const nlohmann::json& doc);
LexiconDictionary load_lexicon_file(const std::string& path);
/// The small demonstration lexicon bundled with the library.
LexiconDictionary demo_lexicon();

struct FeatureVector {
  Method method = Method::Lex;
  std::map<std::string, double> features;
};

/// Density features "<lexicon>.<category>" = sum of matched weights / token count.
FeatureVector extract_lexicon_features(std::string_view text, std::span<const LexiconDictionary> dictionaries);

inline constexpr std::array<const char*, 8> kPatternClasses = {
    "identity/self-concept", "emotional regulation",  "social orientation",    "cognitive style",
    "values/beliefs",        "motivation",            "trust/decision-making", "behavioral tendencies"};

enum class Confidence { High, Medium, Low };
std::string to_string(Confidence c);
double confidence_weight(Confidence c);

struct SemanticPattern {
  std::string extraction_class;
  std::string extraction_text;
  std::string interpretation;
  Confidence confidence = Confidence::Medium;
  std::vector<std::string> cue_terms;
  std::optional<std::string> big_five_hints;
  std::optional<std::string> scale_hints;
};

bool is_pattern_class(std::string_view name);
/// "emotional regulation" -> "emotional_regulation"
std::string class_slug(std::string_view name);

/// Reads {"patterns": [...]} or a bare array. Throws ExtractionError naming the problem.
std::vector<SemanticPattern> parse_patterns(const nlohmann::json& doc);
std::optional<std::string> validate_patterns(const nlohmann::json& doc);
nlohmann::json to_json(const SemanticPattern& p);

std::string semantic_prompt(std::string_view text);

std::vector<SemanticPattern> extract_semantic_patterns(std::string_view text, providers::CompletionProvider& provider,
                                                       const providers::RetryPolicy& retry = {});

/// "pattern.<slug>" per class (confidence-weighted) plus "pattern.total_count".
FeatureVector patterns_to_features(std::span<const SemanticPattern> patterns);

/// "name: value" lines in name order.
std::string render_features(const FeatureVector& f);

}  // namespace statetrait::extraction
