#include "statetrait/scales.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "statetrait/embedded.hpp"
#include "statetrait/error.hpp"
#include "statetrait/text.hpp"

namespace statetrait::scales {

using nlohmann::json;

std::size_t ScaleRegistry::total_dimensions() const {
  std::size_t n = 0;
  for (const auto& f : frameworks) n += f.dimensions.size();
  return n;
}

std::size_t ScaleRegistry::total_items() const {
  std::size_t n = 0;
  for (const auto& f : frameworks)
    for (const auto& d : f.dimensions) n += d.items.size();
  return n;
}

std::vector<std::string> ScaleRegistry::dimension_names() const {
  std::vector<std::string> out;
  for (const auto& f : frameworks)
    for (const auto& d : f.dimensions) out.push_back(d.name);
  return out;
}

const Framework& ScaleRegistry::framework_of(std::string_view dimension) const {
  for (const auto& f : frameworks)
    for (const auto& d : f.dimensions)
      if (d.name == dimension) return f;
  throw ConfigError("unknown dimension '" + std::string(dimension) + "'");
}

const Framework* ScaleRegistry::find_framework(std::string_view name) const {
  for (const auto& f : frameworks)
    if (f.name == name) return &f;
  return nullptr;
}

const Dimension& ScaleRegistry::dimension(std::string_view name) const {
  for (const auto& f : frameworks)
    for (const auto& d : f.dimensions)
      if (d.name == name) return d;
  throw ConfigError("unknown dimension '" + std::string(name) + "'");
}

ScaleRegistry load_registry(const json& doc) {
  if (!doc.is_object() || !doc.contains("frameworks") || !doc["frameworks"].is_array())
    throw ConfigError("registry must contain a 'frameworks' list");
  ScaleRegistry r;
  std::set<std::string> ids, dims, names;
  try {
    for (const auto& fj : doc["frameworks"]) {
      Framework f;
      f.name = fj.at("name").get<std::string>();
      f.title = fj.value("title", f.name);
      f.response_min = fj.at("response_min").get<double>();
      f.response_max = fj.at("response_max").get<double>();
      if (!(f.response_min < f.response_max)) throw ConfigError("framework '" + f.name + "': response_min >= response_max");
      if (!names.insert(f.name).second) throw ConfigError("duplicate framework '" + f.name + "'");
      for (const auto& dj : fj.at("dimensions")) {
        Dimension d;
        d.name = dj.at("name").get<std::string>();
        if (!dims.insert(d.name).second) throw ConfigError("dimension '" + d.name + "' appears twice");
        for (const auto& ij : dj.at("items")) {
          ScaleItem it{ij.at("id").get<std::string>(), ij.at("text").get<std::string>(),
                       ij.value("reverse_scored", false)};
          if (it.id.empty() || it.id.find_first_of(" []:") != std::string::npos)
            throw ConfigError("item id '" + it.id + "' is empty or contains reserved characters");
          if (!ids.insert(it.id).second) throw ConfigError("duplicate item id '" + it.id + "'");
          d.items.push_back(std::move(it));
        }
        if (d.items.empty()) throw ConfigError("dimension '" + d.name + "' has no items");
        f.dimensions.push_back(std::move(d));
      }
      r.frameworks.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed registry: ") + e.what());
  }
  return r;
}

ScaleRegistry load_registry_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open registry '" + path + "'");
  json doc = json::parse(f, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("registry '" + path + "' is not valid JSON");
  return load_registry(doc);
}

ScaleRegistry default_registry() { return load_registry(json::parse(*embedded::lookup("registry.json"))); }

json to_json(const ScaleRegistry& r) {
  json fw = json::array();
  for (const auto& f : r.frameworks) {
    json dims = json::array();
    for (const auto& d : f.dimensions) {
      json items = json::array();
      for (const auto& i : d.items) items.push_back({{"id", i.id}, {"text", i.text}, {"reverse_scored", i.reverse_scored}});
      dims.push_back({{"name", d.name}, {"items", items}});
    }
    fw.push_back({{"name", f.name},
                  {"title", f.title},
                  {"response_min", f.response_min},
                  {"response_max", f.response_max},
                  {"dimensions", dims}});
  }
  return {{"frameworks", fw}};
}

void set_response_range(ScaleRegistry& r, std::string_view framework, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("response range must satisfy min < max");
  for (auto& f : r.frameworks)
    if (f.name == framework) {
      f.response_min = lo;
      f.response_max = hi;
      return;
    }
  throw ConfigError("unknown framework '" + std::string(framework) + "'");
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::optional<double> numeric(const json& v) {
  if (v.is_number()) {
    const double d = v.get<double>();
    return std::isfinite(d) ? std::optional(d) : std::nullopt;
  }
  if (v.is_string()) {
    const std::string s = text::trim(v.get<std::string>());
    double d = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), d);
    if (ec == std::errc() && p == s.data() + s.size() && !s.empty() && std::isfinite(d)) return d;
  }
  return std::nullopt;
}

struct ItemProblem {
  std::string item;
  std::string what;
};

std::optional<ItemProblem> check_items(const json& doc, const ScaleRegistry& registry) {
  if (!doc.is_object() || !doc.contains("scale_responses") || !doc["scale_responses"].is_object())
    return ItemProblem{"", "document lacks a 'scale_responses' object"};
  const auto& sr = doc["scale_responses"];
  for (const auto& f : registry.frameworks)
    for (const auto& d : f.dimensions)
      for (const auto& it : d.items) {
        auto v = sr.find(it.id);
        if (v == sr.end()) return ItemProblem{it.id, "item '" + it.id + "' is missing"};
        if (!numeric(*v)) return ItemProblem{it.id, "item '" + it.id + "' is not numeric: " + v->dump()};
      }
  return std::nullopt;
}

}  // namespace

std::string assessment_prompt(const extraction::FeatureVector& features, const ScaleRegistry& registry) {
  std::string s =
      "Task. You are a psychological researcher. Based on the behavioral analysis below, respond to validated "
      "psychological scales AS IF YOU WERE this specific user. Use the behavioral patterns and text evidence to "
      "inform your responses.\n\nScales:\n";
  for (const auto& f : registry.frameworks) {
    s += "- " + f.title + " (" + f.name + "): ";
    for (std::size_t i = 0; i < f.dimensions.size(); ++i) {
      if (i) s += ", ";
      s += f.dimensions[i].name + " (" + std::to_string(f.dimensions[i].items.size()) + " items)";
    }
    s += ". Scale: " + num(f.response_min) + " to " + num(f.response_max) + ".\n";
  }
  s += "\nRequirements: (1) Score ALL items with numeric values; (2) Use correct scales; (3) Apply reverse scoring "
       "where indicated; (4) Ground responses in behavioral analysis evidence; (5) Calculate accurate subscale "
       "averages; (6) Output valid JSON.\n\n";
  s += "BEHAVIORAL ANALYSIS (" + extraction::to_string(features.method) + " features):\n";
  s += extraction::render_features(features);
  s += "ITEMS:\n";
  for (const auto& f : registry.frameworks)
    for (const auto& d : f.dimensions)
      for (const auto& it : d.items)
        s += "- " + it.id + " [" + num(f.response_min) + " to " + num(f.response_max) + "]: " + it.text +
             (it.reverse_scored ? " (R)" : "") + "\n";
  s += "\nReturn JSON: {\"scale_responses\": {\"<item id>\": <number>, ...}, \"scale_averages\": {...}, "
       "\"interpretations\": {...}}\n";
  return s;
}

ItemAssessment assess_items(const extraction::FeatureVector& features, const ScaleRegistry& registry,
                            providers::CompletionProvider& provider, const providers::RetryPolicy& retry) {
  if (features.features.empty()) throw PreconditionError("feature vector is empty");
  providers::CompletionRequest req;
  req.user_text = assessment_prompt(features, registry);
  req.schema_id = "scale_assessment";
  json doc;
  try {
    doc = providers::complete_structured(
        provider, req,
        [&](const json& d) -> std::optional<std::string> {
          if (auto p = check_items(d, registry)) return p->what;
          return std::nullopt;
        },
        retry);
  } catch (const ExtractionError& e) {
    const std::string msg = e.what();
    const auto q = msg.find("item '");
    std::string item;
    if (q != std::string::npos) item = msg.substr(q + 6, msg.find('\'', q + 6) - q - 6);
    throw AssessmentError(item, msg);
  }
  ItemAssessment out;
  const auto& sr = doc["scale_responses"];
  for (const auto& f : registry.frameworks)
    for (const auto& d : f.dimensions)
      for (const auto& it : d.items) {
        double v = *numeric(sr[it.id]);
        if (v < f.response_min || v > f.response_max) {
          const double c = std::clamp(v, f.response_min, f.response_max);
          out.warnings.push_back("item '" + it.id + "': " + num(v) + " clamped to " + num(c));
          v = c;
        }
        out.responses[it.id] = v;
      }
  return out;
}

double RawProfile::at(std::string_view dimension) const {
  for (std::size_t i = 0; i < dimensions.size(); ++i)
    if (dimensions[i] == dimension) return scores[i];
  throw ConfigError("profile has no dimension '" + std::string(dimension) + "'");
}

RawProfile score_subscales(const std::map<std::string, double>& item_scores, const ScaleRegistry& registry,
                           extraction::Method method, std::string post_id) {
  RawProfile p{std::move(post_id), method, {}, {}};
  for (const auto& f : registry.frameworks)
    for (const auto& d : f.dimensions) {
      double sum = 0;
      for (const auto& it : d.items) {
        auto v = item_scores.find(it.id);
        if (v == item_scores.end()) throw ScoringError("missing score for item '" + it.id + "'");
        sum += it.reverse_scored ? reverse_score(v->second, f.response_min, f.response_max) : v->second;
      }
      p.dimensions.push_back(d.name);
      p.scores.push_back(sum / static_cast<double>(d.items.size()));
    }
  return p;
}

}  // namespace statetrait::scales
