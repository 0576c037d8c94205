#include "statetrait/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "statetrait/embedded.hpp"
#include "statetrait/error.hpp"
#include "statetrait/text.hpp"

namespace statetrait::extraction {

using nlohmann::json;

std::string to_string(Method m) { return m == Method::Lex ? "lex" : "sem"; }

Method parse_method(std::string_view s) {
  if (s == "lex") return Method::Lex;
  if (s == "sem") return Method::Sem;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

std::vector<std::string> LexiconDictionary::categories() const {
  std::set<std::string> c;
  for (const auto& [term, list] : entries)
    for (const auto& e : list) c.insert(e.category);
  return {c.begin(), c.end()};
}

double LexiconDictionary::max_weight() const {
  double m = 0.0;
  for (const auto& [term, list] : entries)
    for (const auto& e : list) m = std::max(m, e.weight);
  return m;
}

LexiconDictionary load_lexicon(const json& doc) {
  if (!doc.is_object() || !doc.contains("name") || !doc.contains("entries") || !doc["entries"].is_object())
    throw ConfigError("lexicon must be an object with 'name' and 'entries'");
  LexiconDictionary lex;
  lex.name = doc["name"].get<std::string>();
  if (lex.name.empty() || lex.name.find('.') != std::string::npos)
    throw ConfigError("lexicon name must be non-empty and contain no '.'");
  for (const auto& [raw_term, list] : doc["entries"].items()) {
    const std::string term = text::to_lower_ascii(raw_term);
    if (term.empty() || text::split_whitespace(term).size() != 1)
      throw ConfigError("lexicon '" + lex.name + "': term '" + raw_term + "' must be a single token");
    if (!list.is_array()) throw ConfigError("lexicon '" + lex.name + "': entry for '" + raw_term + "' is not a list");
    auto& out = lex.entries[term];
    for (const auto& e : list) {
      if (!e.is_array() || e.size() < 2 || !e[0].is_string() || !e[1].is_number())
        throw ConfigError("lexicon '" + lex.name + "': malformed entry for '" + raw_term + "'");
      LexiconEntry le{e[0].get<std::string>(), e[1].get<double>(), e.size() > 2 ? e[2].get<std::string>() : ""};
      if (!std::isfinite(le.weight)) throw ConfigError("lexicon '" + lex.name + "': non-finite weight");
      out.push_back(std::move(le));
    }
  }
  return lex;
}

LexiconDictionary load_lexicon_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open lexicon '" + path + "'");
  json doc = json::parse(f, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("lexicon '" + path + "' is not valid JSON");
  return load_lexicon(doc);
}

LexiconDictionary demo_lexicon() {
  const auto data = embedded::lookup("lexicon_demo.json");
  return load_lexicon(json::parse(*data));
}

namespace {

struct Matcher {
  const LexiconDictionary* lex;
  std::vector<std::pair<std::string, const std::vector<LexiconEntry>*>> prefixes;  // longest first

  explicit Matcher(const LexiconDictionary& d) : lex(&d) {
    for (const auto& [term, list] : d.entries)
      if (term.size() > 1 && term.back() == '*') prefixes.emplace_back(term.substr(0, term.size() - 1), &list);
    std::stable_sort(prefixes.begin(), prefixes.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  }

  const std::vector<LexiconEntry>* match(const std::string& tok) const {
    if (auto it = lex->entries.find(tok); it != lex->entries.end()) return &it->second;
    for (const auto& [p, list] : prefixes)
      if (tok.compare(0, p.size(), p) == 0) return list;
    return nullptr;
  }
};

}  // namespace

FeatureVector extract_lexicon_features(std::string_view t, std::span<const LexiconDictionary> dictionaries) {
  if (dictionaries.empty()) throw ConfigError("no lexicon dictionaries configured");
  FeatureVector fv{Method::Lex, {}};
  const auto tokens = text::lexical_tokens(t);
  for (const auto& d : dictionaries) {
    std::map<std::string, double> sums;
    for (const auto& c : d.categories()) sums[c] = 0.0;
    const Matcher m(d);
    for (const auto& tok : tokens)
      if (const auto* list = m.match(tok))
        for (const auto& e : *list) sums[e.category] += e.weight;
    for (const auto& [cat, s] : sums) {
      const std::string key = d.name + "." + cat;
      if (fv.features.count(key)) throw ConfigError("duplicate feature '" + key + "'");
      fv.features[key] = tokens.empty() ? 0.0 : s / static_cast<double>(tokens.size());
    }
  }
  return fv;
}

// ---------------------------------------------------------------------------

std::string to_string(Confidence c) {
  switch (c) {
    case Confidence::High:
      return "high";
    case Confidence::Medium:
      return "medium";
    case Confidence::Low:
      return "low";
  }
  return "low";
}

double confidence_weight(Confidence c) {
  switch (c) {
    case Confidence::High:
      return 1.0;
    case Confidence::Medium:
      return 0.6;
    case Confidence::Low:
      return 0.3;
  }
  return 0.0;
}

bool is_pattern_class(std::string_view name) {
  return std::find(kPatternClasses.begin(), kPatternClasses.end(), name) != kPatternClasses.end();
}

std::string class_slug(std::string_view name) {
  std::string s;
  for (char c : name) s += (c == ' ' || c == '/' || c == '-') ? '_' : c;
  return s;
}

namespace {

SemanticPattern parse_one(const json& p, std::size_t idx) {
  auto fail = [&](const std::string& why) -> ExtractionError {
    return ExtractionError("pattern " + std::to_string(idx) + ": " + why);
  };
  if (!p.is_object()) throw fail("not an object");
  auto str = [&](const char* k) {
    auto it = p.find(k);
    if (it == p.end() || !it->is_string()) throw fail(std::string("missing string field '") + k + "'");
    return it->get<std::string>();
  };
  SemanticPattern out;
  out.extraction_class = str("extraction_class");
  if (!is_pattern_class(out.extraction_class)) throw fail("unknown extraction_class '" + out.extraction_class + "'");
  out.extraction_text = str("extraction_text");
  const auto wc = text::word_count(out.extraction_text);
  if (wc < 3 || wc > 50) throw fail("extraction_text has " + std::to_string(wc) + " words, expected 3-50");
  out.interpretation = str("interpretation");
  const std::string conf = str("confidence");
  if (conf == "high")
    out.confidence = Confidence::High;
  else if (conf == "medium")
    out.confidence = Confidence::Medium;
  else if (conf == "low")
    out.confidence = Confidence::Low;
  else
    throw fail("confidence '" + conf + "' is not high|medium|low");
  if (auto it = p.find("cue_terms"); it != p.end() && !it->is_null()) {
    if (!it->is_array()) throw fail("cue_terms is not a list");
    for (const auto& c : *it) {
      if (!c.is_string()) throw fail("cue_terms entries must be strings");
      out.cue_terms.push_back(c.get<std::string>());
    }
  }
  for (auto [key, slot] : {std::pair{"big_five_hints", &out.big_five_hints}, std::pair{"scale_hints", &out.scale_hints}}) {
    auto it = p.find(key);
    if (it == p.end() || it->is_null()) continue;
    if (!it->is_string()) throw fail(std::string(key) + " must be a string or null");
    *slot = it->get<std::string>();
  }
  return out;
}

}  // namespace

std::vector<SemanticPattern> parse_patterns(const json& doc) {
  const json* list = &doc;
  if (doc.is_object()) {
    auto it = doc.find("patterns");
    if (it == doc.end()) throw ExtractionError("document lacks 'patterns'");
    list = &*it;
  }
  if (!list->is_array()) throw ExtractionError("'patterns' is not a list");
  std::vector<SemanticPattern> out;
  for (std::size_t i = 0; i < list->size(); ++i) out.push_back(parse_one((*list)[i], i));
  return out;
}

std::optional<std::string> validate_patterns(const json& doc) {
  try {
    parse_patterns(doc);
    return std::nullopt;
  } catch (const ExtractionError& e) {
    return std::string(e.what());
  }
}

json to_json(const SemanticPattern& p) {
  json j = {{"extraction_class", p.extraction_class},
            {"extraction_text", p.extraction_text},
            {"interpretation", p.interpretation},
            {"confidence", to_string(p.confidence)},
            {"cue_terms", p.cue_terms},
            {"big_five_hints", nullptr},
            {"scale_hints", nullptr}};
  if (p.big_five_hints) j["big_five_hints"] = *p.big_five_hints;
  if (p.scale_hints) j["scale_hints"] = *p.scale_hints;
  return j;
}

std::string semantic_prompt(std::string_view t) {
  std::string s =
      "Task. Analyze text to identify psychological patterns that reveal how people think, feel, and behave. "
      "Find specific language patterns and explain what they suggest about the person's psychology. Always quote "
      "exact words from the conversation, then interpret what those patterns reveal.\n\n"
      "Pattern Categories:\n"
      "- identity/self-concept: Self-focus vs group-focus, self-criticism vs confidence, personal narratives\n"
      "- emotional regulation: Emotion words, intensity markers, coping strategies, stability vs volatility\n"
      "- social orientation: Politeness markers, agreement patterns, connection vs independence\n"
      "- cognitive style: Analytical vs storytelling, certainty vs uncertainty, tolerance for complexity\n"
      "- values/beliefs: Care/harm, fairness/justice, loyalty, authority, achievement vs relationship focus\n"
      "- motivation: Help-seeking vs self-reliance, achievement language, time orientation\n"
      "- trust/decision-making: Hedge words vs certainty words, skepticism vs trust, verification-seeking\n"
      "- behavioral tendencies: Impulsivity vs deliberation, openness vs routine, extraversion signs\n\n"
      "For each pattern, extract:\n"
      "- extraction_class: One of the 8 categories above\n"
      "- extraction_text: Exact quoted words (3-50 words)\n"
      "- interpretation: Clear explanation in everyday language\n"
      "- confidence: high | medium | low\n"
      "- cue_terms: Specific key words or phrases signaling the pattern\n"
      "- big_five_hints: Optional directional tendencies (e.g., \"toward higher Openness\")\n"
      "- scale_hints: Optional connections to HEXACO, values, cognitive traits, motivation, risk\n\n"
      "Return JSON: {\"patterns\": [ ... ]}\n\nTEXT:\n";
  s += t;
  return s;
}

std::vector<SemanticPattern> extract_semantic_patterns(std::string_view t, providers::CompletionProvider& provider,
                                                       const providers::RetryPolicy& retry) {
  if (text::trim(t).empty()) throw PreconditionError("cannot extract patterns from empty text");
  providers::CompletionRequest req;
  req.user_text = semantic_prompt(t);
  req.schema_id = "semantic_patterns";
  const json doc = providers::complete_structured(provider, req, validate_patterns, retry);
  return parse_patterns(doc);
}

FeatureVector patterns_to_features(std::span<const SemanticPattern> patterns) {
  FeatureVector fv{Method::Sem, {}};
  for (const char* c : kPatternClasses) fv.features["pattern." + class_slug(c)] = 0.0;
  for (const auto& p : patterns) fv.features.at("pattern." + class_slug(p.extraction_class)) += confidence_weight(p.confidence);
  fv.features["pattern.total_count"] = static_cast<double>(patterns.size());
  return fv;
}

std::string render_features(const FeatureVector& f) {
  std::string out;
  for (const auto& [k, v] : f.features) out += k + ": " + text::fixed(v, 6) + "\n";
  return out;
}

}  // namespace statetrait::extraction
