#include "statetrait/providers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "statetrait/extraction.hpp"
#include "statetrait/rng.hpp"
#include "statetrait/text.hpp"

namespace statetrait::providers {

using nlohmann::json;

void validate(const CompletionRequest& r) {
  if (text::trim(r.user_text).empty()) throw PreconditionError("completion request has empty user text");
  if (!(r.temperature >= 0.0 && r.temperature <= 2.0)) throw PreconditionError("temperature must lie in [0, 2]");
}

std::uint64_t request_hash(const CompletionRequest& r, std::uint64_t seed) {
  std::uint64_t h = text::fnv1a64(r.system_text, seed);
  h = text::fnv1a64("\x1f", h);
  h = text::fnv1a64(r.user_text, h);
  h = text::fnv1a64("\x1f", h);
  h = text::fnv1a64(r.schema_id, h);
  return text::mix64(h ^ static_cast<std::uint64_t>(std::llround(r.temperature * 1000.0)));
}

std::string format_reward_input(const std::string& question, const std::string& response,
                                const std::optional<std::string>& profile_prefix) {
  std::string out;
  if (profile_prefix) out += "The user has this psychological profile: " + *profile_prefix + "\n";
  out += "User: " + question + "\n\nAssistant: " + response;
  return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw PairingError("cosine of vectors with different dimensions");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

std::optional<json> parse_json_payload(std::string_view t) {
  auto attempt = [](std::string_view s) -> std::optional<json> {
    auto j = json::parse(s.begin(), s.end(), nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  if (auto j = attempt(t)) return j;
  if (auto fence = t.find("```"); fence != std::string_view::npos) {
    auto body = t.find('\n', fence);
    auto end = body == std::string_view::npos ? body : t.find("```", body);
    if (end != std::string_view::npos)
      if (auto j = attempt(t.substr(body + 1, end - body - 1))) return j;
  }
  const auto open = t.find_first_of("{[");
  const auto close = t.find_last_of("}]");
  if (open != std::string_view::npos && close != std::string_view::npos && close > open)
    return attempt(t.substr(open, close - open + 1));
  return std::nullopt;
}

json complete_structured(CompletionProvider& provider, const CompletionRequest& request,
                         const DocumentValidator& validator, const RetryPolicy& retry, int max_repairs) {
  validate(request);
  CompletionRequest current = request;
  std::string problem;
  for (int attempt = 0; attempt <= max_repairs; ++attempt) {
    const std::string raw = with_retry(retry, [&] { return provider.complete(current); });
    auto doc = parse_json_payload(raw);
    if (!doc) {
      problem = "output is not valid JSON";
    } else if (auto err = validator ? validator(*doc) : std::nullopt) {
      problem = *err;
    } else {
      return *doc;
    }
    current.user_text = request.user_text + "\n\nYour previous output was rejected: " + problem +
                        "\nReturn only corrected JSON.";
  }
  throw ExtractionError("structured output from '" + provider.model_id() + "' invalid after repair: " + problem);
}

// ---------------------------------------------------------------------------
// Template completion

namespace {

constexpr const char* kOpeners[] = {"Honestly,", "I think", "In my view,", "Well,", "To be fair,", "Personally,",
                                    "It depends, but", "From experience,"};
constexpr const char* kStances[] = {"that seems reasonable", "I would be careful", "it is worth trying",
                                    "people disagree about this", "the answer is usually yes",
                                    "the answer is usually no", "context matters a lot", "I am not sure"};
constexpr const char* kPersona[] = {"I worry about getting it wrong", "I like to take charge",
                                    "I trust my own judgement", "keeping the peace matters to me",
                                    "I question the usual answer", "I enjoy a bit of risk",
                                    "I want to feel supported", "I look at the facts first"};
constexpr const char* kClosers[] = {"That is how I see it.", "Hope that helps.", "Just my opinion.",
                                    "Others may differ.", "Think it through.", "Trust yourself."};

template <std::size_t N>
const char* pick(const char* const (&arr)[N], std::uint64_t h) {
  return arr[h % N];
}

}  // namespace

TemplateCompletionMock::TemplateCompletionMock(std::uint64_t seed, std::string model)
    : seed_(seed), model_(std::move(model)) {}

std::string TemplateCompletionMock::complete(const CompletionRequest& request) {
  validate(request);
  Rng rng(request_hash(request, seed_));
  const auto words = text::lexical_tokens(request.user_text);
  std::string out = pick(kOpeners, rng.next());
  out += ' ';
  out += pick(kStances, rng.next());
  if (!words.empty()) {
    out += " when it comes to";
    const std::size_t n = std::min<std::size_t>(words.size(), 3 + rng.below(4));
    const std::size_t start = static_cast<std::size_t>(rng.below(words.size() - n + 1));
    for (std::size_t i = 0; i < n; ++i) out += ' ' + words[start + i];
  }
  out += '.';
  if (!request.system_text.empty()) {
    Rng persona(text::fnv1a64(request.system_text, seed_));
    out += ' ';
    out += pick(kPersona, persona.next());
    out += ", and ";
    out += pick(kStances, rng.next());
    out += '.';
  }
  out += ' ';
  out += pick(kClosers, rng.next());
  return out;
}

ScriptedCompletionMock::ScriptedCompletionMock(std::vector<std::string> outputs, std::string model)
    : outputs_(std::move(outputs)), model_(std::move(model)) {
  if (outputs_.empty()) throw PreconditionError("scripted mock needs at least one output");
}

std::string ScriptedCompletionMock::complete(const CompletionRequest& request) {
  std::lock_guard lock(mu_);
  seen_.push_back(request);
  return outputs_[std::min(seen_.size() - 1, outputs_.size() - 1)];
}

std::size_t ScriptedCompletionMock::calls() const {
  std::lock_guard lock(mu_);
  return seen_.size();
}

std::vector<CompletionRequest> ScriptedCompletionMock::requests() const {
  std::lock_guard lock(mu_);
  return seen_;
}

std::string EchoCompletionMock::complete(const CompletionRequest& request) {
  validate(request);
  return request.tag.empty() ? request.user_text : request.tag;
}

// ---------------------------------------------------------------------------
// Scale assessment mock

namespace {

struct ParsedItem {
  std::string id;
  double lo, hi;
};

std::optional<double> to_double(std::string_view s) {
  s = std::string_view(s.data(), s.size());
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<ParsedItem> parse_item_line(std::string_view line) {
  if (line.rfind("- ", 0) != 0) return std::nullopt;
  line.remove_prefix(2);
  const auto sp = line.find(" [");
  const auto to = line.find(" to ", sp == std::string_view::npos ? 0 : sp);
  const auto close = line.find("]:", to == std::string_view::npos ? 0 : to);
  if (sp == std::string_view::npos || to == std::string_view::npos || close == std::string_view::npos)
    return std::nullopt;
  auto lo = to_double(line.substr(sp + 2, to - sp - 2));
  auto hi = to_double(line.substr(to + 4, close - to - 4));
  if (!lo || !hi) return std::nullopt;
  return ParsedItem{std::string(line.substr(0, sp)), *lo, *hi};
}

}  // namespace

ScaleAssessmentMock::ScaleAssessmentMock(std::uint64_t seed, Mode mode, double constant, std::string model)
    : seed_(seed), mode_(mode), constant_(constant), model_(std::move(model)) {}

std::string ScaleAssessmentMock::complete(const CompletionRequest& request) {
  validate(request);
  std::istringstream in(request.user_text);
  std::string line, features;
  std::vector<ParsedItem> items;
  bool in_features = false;
  while (std::getline(in, line)) {
    if (line.rfind("BEHAVIORAL ANALYSIS", 0) == 0) {
      in_features = true;
      continue;
    }
    if (line.rfind("ITEMS:", 0) == 0) {
      in_features = false;
      continue;
    }
    if (in_features) {
      features += line;
      features += '\n';
    } else if (auto item = parse_item_line(line)) {
      items.push_back(std::move(*item));
    }
  }
  const std::uint64_t fh = text::fnv1a64(features, seed_);
  json responses = json::object();
  for (const auto& it : items) {
    double v = 0;
    switch (mode_) {
      case Mode::Midpoint:
        v = 0.5 * (it.lo + it.hi);
        break;
      case Mode::Constant:
        v = constant_;
        break;
      case Mode::Hashed: {
        Rng item_rng(text::fnv1a64(it.id, seed_));
        Rng post_rng(text::mix64(fh ^ text::fnv1a64(it.id)));
        const double u = 0.5 * item_rng.uniform() + 0.5 * post_rng.uniform();
        v = std::round(it.lo + u * (it.hi - it.lo));
        break;
      }
    }
    responses[it.id] = v;
  }
  json doc = {{"scale_responses", responses}, {"scale_averages", json::object()}, {"interpretations", json::object()}};
  return doc.dump();
}

// ---------------------------------------------------------------------------
// Semantic pattern mock

SemanticPatternMock::SemanticPatternMock(std::uint64_t seed, std::string model)
    : seed_(seed), model_(std::move(model)) {}

std::string SemanticPatternMock::complete(const CompletionRequest& request) {
  validate(request);
  const std::string& u = request.user_text;
  const auto marker = u.rfind("TEXT:\n");
  const std::string_view body =
      marker == std::string::npos ? std::string_view(u) : std::string_view(u).substr(marker + 6);
  const auto words = text::split_whitespace(body);
  json patterns = json::array();
  Rng rng(request_hash(request, seed_));
  if (words.size() >= 3) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(4));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t len = std::min<std::size_t>(words.size(), 3 + rng.below(10));
      const std::size_t start = static_cast<std::size_t>(rng.below(words.size() - len + 1));
      std::string quote;
      for (std::size_t w = 0; w < len; ++w) {
        if (w) quote += ' ';
        quote += words[start + w];
      }
      const char* cls = extraction::kPatternClasses[rng.below(extraction::kPatternClasses.size())];
      static constexpr const char* kConf[] = {"high", "medium", "low"};
      json p = {{"extraction_class", cls},
                {"extraction_text", quote},
                {"interpretation", std::string("Language here suggests ") + cls + "."},
                {"confidence", kConf[rng.below(3)]},
                {"cue_terms", json::array({text::to_lower_ascii(words[start])})},
                {"big_five_hints", nullptr},
                {"scale_hints", nullptr}};
      patterns.push_back(std::move(p));
    }
  }
  return json{{"patterns", patterns}}.dump();
}

// ---------------------------------------------------------------------------

HashedBowEmbedder::HashedBowEmbedder(std::size_t dimension, std::uint64_t seed) : dim_(dimension), seed_(seed) {
  if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<double> HashedBowEmbedder::embed(std::string_view t) {
  const auto tokens = text::lexical_tokens(t);
  if (tokens.empty()) throw PreconditionError("cannot embed empty text");
  std::vector<double> v(dim_, 0.0);
  for (const auto& tok : tokens) v[text::fnv1a64(tok, seed_) % dim_] += 1.0;
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

RewardMock::RewardMock(std::string model, std::uint64_t seed, double delta, double card_scale)
    : model_(std::move(model)), seed_(seed), delta_(delta), card_scale_(card_scale) {}

RewardScore RewardMock::score(const std::string& question, const std::string& response,
                              const std::optional<std::string>& profile_prefix) {
  if (text::trim(question).empty() || text::trim(response).empty())
    throw PreconditionError("reward scoring needs a question and a response");
  std::uint64_t h = text::fnv1a64(question, seed_);
  h = text::fnv1a64("\x1f", h);
  h = text::fnv1a64(response, h);
  double v = (Rng(text::mix64(h)).uniform() - 0.5) * 4.0;
  if (profile_prefix) {
    v += delta_;
    if (card_scale_ != 0.0)
      v += card_scale_ * (Rng(text::fnv1a64(*profile_prefix, seed_)).uniform() * 2.0 - 1.0);
  }
  return {v, model_};
}

}  // namespace statetrait::providers
