#include <doctest.h>

#include <cmath>

#include "statetrait/error.hpp"
#include "statetrait/extraction.hpp"
#include "statetrait/rng.hpp"

using namespace statetrait;
using namespace statetrait::extraction;
using nlohmann::json;

namespace {

LexiconDictionary happy_lexicon() {
  return load_lexicon(json::parse(R"({"name": "t", "entries": {"happy": [["positive_affect", 1.0]]}})"));
}

std::string pattern_doc(const std::string& cls, const std::string& conf) {
  json p = {{"extraction_class", cls},
            {"extraction_text", "I just cannot stop worrying"},
            {"interpretation", "ruminative"},
            {"confidence", conf},
            {"cue_terms", {"worrying"}},
            {"big_five_hints", "toward higher Neuroticism"},
            {"scale_hints", nullptr}};
  return json{{"patterns", {p}}}.dump();
}

providers::RetryPolicy quick() {
  providers::RetryPolicy p;
  p.sleep = nullptr;
  return p;
}

}  // namespace

TEST_CASE("lexicon: no dictionaries") {
  CHECK_THROWS_AS(extract_lexicon_features("some text", {}), ConfigError);
}

TEST_CASE("lexicon: density by hand") {
  const std::vector<LexiconDictionary> d{happy_lexicon()};
  const auto f = extract_lexicon_features("I am happy happy", d);
  CHECK(f.method == Method::Lex);
  CHECK(f.features.at("t.positive_affect") == 0.5);
}

TEST_CASE("lexicon: case folding and punctuation stripping") {
  const std::vector<LexiconDictionary> d{happy_lexicon()};
  CHECK(extract_lexicon_features("Happy HAPPY", d).features == extract_lexicon_features("happy happy", d).features);
  CHECK(extract_lexicon_features("(happy!)", d).features.at("t.positive_affect") == 1.0);
}

TEST_CASE("lexicon: prefix patterns and exact precedence") {
  const auto lex = load_lexicon(json::parse(
      R"({"name": "w", "entries": {"worr*": [["anxiety", 1.0]], "wor*": [["other", 1.0]], "worry": [["exact", 2.0]]}})"));
  const std::vector<LexiconDictionary> d{lex};
  const auto f = extract_lexicon_features("worried worry work", d);
  CHECK(f.features.at("w.anxiety") == doctest::Approx(1.0 / 3));
  CHECK(f.features.at("w.exact") == doctest::Approx(2.0 / 3));
  CHECK(f.features.at("w.other") == doctest::Approx(1.0 / 3));
}

TEST_CASE("lexicon: malformed files are rejected") {
  CHECK_THROWS_AS(load_lexicon(json{{"name", "x"}}), ConfigError);
  CHECK_THROWS_AS(load_lexicon(json::parse(R"({"name": "x", "entries": {"two words": [["c", 1.0]]}})")), ConfigError);
  CHECK_THROWS_AS(load_lexicon(json::parse(R"({"name": "x", "entries": {"w": [["c"]]}})")), ConfigError);
}

TEST_CASE("lexicon: demo features are bounded and ratio-invariant") {
  const std::vector<LexiconDictionary> d{demo_lexicon()};
  const double wmax = d[0].max_weight();
  Rng rng(4);
  const char* vocab[] = {"happy", "sad", "worried", "friends", "alone", "goal", "money", "the", "and", "love",
                         "angry", "family", "risk", "maybe", "certainly", "I", "we"};
  for (int rep = 0; rep < 50; ++rep) {
    std::string t;
    const auto n = 1 + rng.below(40);
    for (std::uint64_t i = 0; i < n; ++i) t += std::string(vocab[rng.below(std::size(vocab))]) + " ";
    const auto f = extract_lexicon_features(t, d);
    const auto g = extract_lexicon_features(t + t, d);
    for (const auto& [k, v] : f.features) {
      CHECK(v >= 0.0);
      CHECK(v <= wmax * 2.0 + 1e-12);  // a token can carry at most two entries of one category
      CHECK(std::fabs(v - g.features.at(k)) < 1e-12);
    }
  }
  CHECK(extract_lexicon_features("", d).features.at("demo.positive_affect") == 0.0);
}

TEST_CASE("lexicon: unit-weight densities never exceed one") {
  const auto lex = load_lexicon(json::parse(
      R"({"name": "u", "entries": {"ax": [["x", 1.0]], "bx": [["x", 1.0], ["y", 1.0]], "c*": [["y", 1.0]]}})"));
  const std::vector<LexiconDictionary> d{lex};
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    std::string t;
    for (std::uint64_t i = 0, n = 1 + rng.below(20); i < n; ++i) t += std::string(1, static_cast<char>('a' + rng.below(4))) + "x ";
    for (const auto& [k, v] : extract_lexicon_features(t, d).features) CHECK(v <= 1.0);
  }
}

TEST_CASE("semantic patterns: empty list") {
  providers::ScriptedCompletionMock m({"{\"patterns\": []}"});
  CHECK(extract_semantic_patterns("some text here", m, quick()).empty());
}

TEST_CASE("semantic patterns: fixture round-trip") {
  providers::ScriptedCompletionMock m({pattern_doc("emotional regulation", "high")});
  const auto p = extract_semantic_patterns("I just cannot stop worrying about it", m, quick());
  REQUIRE(p.size() == 1);
  CHECK(p[0].extraction_class == "emotional regulation");
  CHECK(p[0].confidence == Confidence::High);
  CHECK(p[0].cue_terms == std::vector<std::string>{"worrying"});
  CHECK(*p[0].big_five_hints == "toward higher Neuroticism");
  CHECK_FALSE(p[0].scale_hints.has_value());
  CHECK(parse_patterns(json::array({to_json(p[0])}))[0].extraction_text == p[0].extraction_text);
}

TEST_CASE("semantic patterns: invalid class fails after one repair") {
  providers::ScriptedCompletionMock m({pattern_doc("humor", "high")});
  CHECK_THROWS_AS(extract_semantic_patterns("funny text indeed", m, quick()), ExtractionError);
  CHECK(m.calls() == 2);
  providers::ScriptedCompletionMock repaired({pattern_doc("humor", "high"), pattern_doc("motivation", "low")});
  CHECK(extract_semantic_patterns("funny text indeed", repaired, quick())[0].extraction_class == "motivation");
}

TEST_CASE("semantic patterns: text length bounds") {
  json p = json::parse(pattern_doc("motivation", "high"));
  p["patterns"][0]["extraction_text"] = "too short";
  CHECK(validate_patterns(p).has_value());
  CHECK_THROWS_AS(extract_semantic_patterns("", *std::make_unique<providers::ScriptedCompletionMock>(
                                                    std::vector<std::string>{"{}"}), quick()),
                  PreconditionError);
}

TEST_CASE("semantic pattern mock output validates") {
  providers::SemanticPatternMock m(3);
  const auto p = extract_semantic_patterns(
      "I keep telling myself that it will be fine but honestly I am scared of what happens next week", m, quick());
  CHECK_FALSE(p.empty());
  for (const auto& x : p) CHECK(is_pattern_class(x.extraction_class));
}

TEST_CASE("patterns to features") {
  CHECK(patterns_to_features({}).features.at("pattern.total_count") == 0.0);
  for (const auto& [k, v] : patterns_to_features({}).features) CHECK(v == 0.0);
  SemanticPattern hi{"motivation", "a b c", "", Confidence::High, {}, {}, {}};
  std::vector<SemanticPattern> two{hi, hi};
  auto f = patterns_to_features(two);
  CHECK(f.method == Method::Sem);
  CHECK(f.features.at("pattern.motivation") == 2.0);
  CHECK(f.features.at("pattern.total_count") == 2.0);
  SemanticPattern med = hi, low = hi;
  med.confidence = Confidence::Medium;
  low.confidence = Confidence::Low;
  std::vector<SemanticPattern> ml{med, low};
  CHECK(patterns_to_features(ml).features.at("pattern.motivation") == doctest::Approx(0.9).epsilon(1e-15));
}
