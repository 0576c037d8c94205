#include <fstream>
#include <set>
#include <sstream>

#include "statetrait/error.hpp"
#include "statetrait/pipeline.hpp"

namespace statetrait::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<Hypothesis> default_hypotheses() {
  return {{"H1", "SuicideWatch", "Neuroticism", 1},
          {"H2", "SuicideWatch", "Competence", -1},
          {"H3", "depression", "Neuroticism", 1},
          {"H4", "personalfinance", "Security", 1},
          {"H5", "personalfinance", "Achievement", 1}};
}

namespace {

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::optional<fs::path> optional_path(const json& obj, const char* key, const fs::path& base, const std::string& where) {
  const auto s = get_or<std::string>(obj, key, "", where);
  if (s.empty()) return std::nullopt;
  return resolve(base, s);
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

ProviderConfig parse_provider(const json& j, const std::string& where, const std::string& default_model) {
  ProviderConfig p;
  p.model = default_model;
  if (j.is_null()) return p;
  check_keys(j, where, {"kind", "model", "base_url", "credential_env", "timeout_seconds", "seed", "delta", "card_scale"});
  p.kind = get_or<std::string>(j, "kind", "mock", where);
  if (p.kind != "mock" && p.kind != "http") throw ConfigError(where + ".kind must be 'mock' or 'http'");
  p.model = get_or<std::string>(j, "model", default_model, where);
  p.base_url = get_or<std::string>(j, "base_url", "", where);
  p.credential_env = get_or<std::string>(j, "credential_env", providers::kDefaultCredentialEnv, where);
  p.timeout_seconds = get_or<int>(j, "timeout_seconds", 60, where);
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = get_or<std::uint64_t>(j, "seed", 0, where);
  p.delta = get_or<double>(j, "delta", 0.0, where);
  p.card_scale = get_or<double>(j, "card_scale", 0.0, where);
  if (p.kind == "http" && p.base_url.empty()) throw ConfigError(where + ": http providers need base_url");
  if (p.model.empty()) throw ConfigError(where + ": model is empty");
  if (p.timeout_seconds <= 0) throw ConfigError(where + ".timeout_seconds must be positive");
  return p;
}

std::vector<ProviderConfig> parse_provider_list(const json& parent, const char* key, const std::string& where,
                                                std::vector<ProviderConfig> fallback) {
  const auto it = parent.find(key);
  if (it == parent.end() || it->is_null()) return fallback;
  if (!it->is_array() || it->empty()) throw ConfigError(where + "." + key + " must be a non-empty array");
  std::vector<ProviderConfig> out;
  std::set<std::string> models;
  for (std::size_t i = 0; i < it->size(); ++i) {
    out.push_back(parse_provider((*it)[i], where + "." + key + "[" + std::to_string(i) + "]", ""));
    if (!models.insert(out.back().model).second)
      throw ConfigError(where + "." + key + ": duplicate model '" + out.back().model + "'");
  }
  return out;
}

ProviderConfig mock(std::string model, double delta = 0.0, double card_scale = 0.0) {
  ProviderConfig p;
  p.model = std::move(model);
  p.delta = delta;
  p.card_scale = card_scale;
  return p;
}

json provider_json(const ProviderConfig& p) {
  json j{{"kind", p.kind}, {"model", p.model}};
  if (p.kind == "http") j["base_url"] = p.base_url;
  if (p.seed) j["seed"] = *p.seed;
  if (p.delta != 0.0) j["delta"] = p.delta;
  if (p.card_scale != 0.0) j["card_scale"] = p.card_scale;
  return j;
}

}  // namespace

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
  check_keys(doc, "config", {"seed", "corpus", "registry", "thresholds", "lexicons", "archetypes", "questions",
                             "providers", "parallelism", "validation", "audit", "report", "output_dir"});
  RunConfig c;
  c.base_dir = base_dir;
  if (!doc.contains("seed") || doc["seed"].is_null()) throw ConfigError("config.seed is required");
  c.seed = get_or<std::uint64_t>(doc, "seed", 0, "config");

  if (!doc.contains("corpus")) throw ConfigError("config.corpus is required");
  const json& cj = doc["corpus"];
  check_keys(cj, "corpus", {"path", "format", "min_words", "min_contexts", "posts_per_user"});
  const auto cpath = get_or<std::string>(cj, "path", "", "corpus");
  if (cpath.empty()) throw ConfigError("corpus.path is required");
  c.corpus_path = resolve(base_dir, cpath);
  c.corpus_format = corpus::parse_format(get_or<std::string>(cj, "format", "jsonl", "corpus"));
  c.min_words = get_or<std::size_t>(cj, "min_words", 50, "corpus");
  c.min_contexts = get_or<std::size_t>(cj, "min_contexts", 3, "corpus");
  c.posts_per_user = get_or<std::size_t>(cj, "posts_per_user", 3, "corpus");
  if (c.posts_per_user < 2) throw ConfigError("corpus.posts_per_user must be at least 2");
  if (c.min_contexts < c.posts_per_user) throw ConfigError("corpus.min_contexts must be >= posts_per_user");

  c.registry_path = optional_path(doc, "registry", base_dir, "config");
  c.thresholds_path = optional_path(doc, "thresholds", base_dir, "config");
  for (const auto& p : get_or<std::vector<std::string>>(doc, "lexicons", {}, "config"))
    c.lexicon_paths.push_back(resolve(base_dir, p));

  if (doc.contains("archetypes")) {
    const json& a = doc["archetypes"];
    check_keys(a, "archetypes", {"k", "k_range", "restarts", "labels"});
    if (a.contains("k")) {
      if (a["k"].is_string()) {
        if (a["k"] != "auto") throw ConfigError("archetypes.k must be an integer or \"auto\"");
        c.k.reset();
      } else {
        c.k = get_or<int>(a, "k", 6, "archetypes");
      }
    }
    c.k_range = get_or<std::vector<int>>(a, "k_range", c.k_range, "archetypes");
    c.kmeans_restarts = get_or<int>(a, "restarts", 10, "archetypes");
    c.archetype_labels = get_or<std::vector<std::string>>(a, "labels", {}, "archetypes");
  }
  if (c.k && *c.k < 2) throw ConfigError("archetypes.k must be at least 2");
  if (c.k_range.empty()) throw ConfigError("archetypes.k_range is empty");
  if (c.kmeans_restarts < 1) throw ConfigError("archetypes.restarts must be positive");
  if (!c.archetype_labels.empty() && c.k && c.archetype_labels.size() != static_cast<std::size_t>(*c.k))
    throw ConfigError("archetypes.labels must have k entries");

  if (doc.contains("questions")) {
    const json& q = doc["questions"];
    check_keys(q, "questions", {"dilemmas", "opinions"});
    c.dilemmas_path = optional_path(q, "dilemmas", base_dir, "questions");
    c.opinions_path = optional_path(q, "opinions", base_dir, "questions");
  }

  const json providers = doc.value("providers", json::object());
  check_keys(providers, "providers",
             {"extraction", "assessment", "embedding", "embedding_dimension", "generation", "reward", "max_attempts"});
  c.extraction = parse_provider(providers.value("extraction", json()), "providers.extraction", "mock-patterns");
  c.assessment = parse_provider(providers.value("assessment", json()), "providers.assessment", "mock-scales");
  c.embedding = parse_provider(providers.value("embedding", json()), "providers.embedding", "mock-bow");
  c.embedding_dimension = get_or<std::size_t>(providers, "embedding_dimension", providers::kDefaultEmbeddingDim, "providers");
  if (c.embedding_dimension == 0) throw ConfigError("providers.embedding_dimension must be positive");
  c.generation = parse_provider_list(providers, "generation", "providers",
                                     {mock("mock-gen-a"), mock("mock-gen-b"), mock("mock-gen-c")});
  c.reward = parse_provider_list(providers, "reward", "providers",
                                 {mock("rm-blind"), mock("rm-plus", 0.5), mock("rm-minus", -0.5), mock("rm-card", 0.0, 1.0)});
  c.max_attempts = get_or<int>(providers, "max_attempts", 3, "providers");
  if (c.max_attempts < 1) throw ConfigError("providers.max_attempts must be positive");

  c.parallelism = get_or<std::size_t>(doc, "parallelism", 1, "config");
  if (c.parallelism == 0) throw ConfigError("parallelism must be positive");

  c.hypotheses = default_hypotheses();
  if (doc.contains("validation")) {
    const json& v = doc["validation"];
    check_keys(v, "validation", {"baseline_context", "hypotheses", "heatmap_min_posts"});
    c.baseline_context = get_or<std::string>(v, "baseline_context", c.baseline_context, "validation");
    c.heatmap_min_posts = get_or<std::size_t>(v, "heatmap_min_posts", c.heatmap_min_posts, "validation");
    if (v.contains("hypotheses")) {
      c.hypotheses.clear();
      for (const auto& h : v["hypotheses"]) {
        check_keys(h, "validation.hypotheses[]", {"id", "context", "dimension", "expected_sign"});
        Hypothesis x{get_or<std::string>(h, "id", "", "hypothesis"), get_or<std::string>(h, "context", "", "hypothesis"),
                     get_or<std::string>(h, "dimension", "", "hypothesis"), get_or<int>(h, "expected_sign", 1, "hypothesis")};
        if (x.id.empty() || x.context.empty() || x.dimension.empty())
          throw ConfigError("hypotheses need id, context and dimension");
        c.hypotheses.push_back(std::move(x));
      }
    }
  }
  if (doc.contains("audit")) {
    check_keys(doc["audit"], "audit", {"paired_d"});
    c.paired_d = get_or<bool>(doc["audit"], "paired_d", false, "audit");
  }
  if (doc.contains("report")) {
    check_keys(doc["report"], "report", {"formats"});
    c.report_formats.clear();
    for (const auto& f : get_or<std::vector<std::string>>(doc["report"], "formats", {"csv"}, "report"))
      c.report_formats.push_back(report::parse_format(f));
    if (c.report_formats.empty()) throw ConfigError("report.formats is empty");
  }
  c.output_dir = resolve(base_dir, get_or<std::string>(doc, "output_dir", "out", "config"));

  require_file(c.corpus_path, "corpus");
  if (c.registry_path) require_file(*c.registry_path, "registry");
  if (c.thresholds_path) require_file(*c.thresholds_path, "thresholds");
  for (const auto& p : c.lexicon_paths) require_file(p, "lexicon");
  if (c.dilemmas_path) require_file(*c.dilemmas_path, "dilemma questions");
  if (c.opinions_path) require_file(*c.opinions_path, "opinion questions");
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const json doc = json::parse(ss.str(), nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config '" + path.string() + "' is not valid JSON");
  return parse_config(doc, fs::absolute(path).parent_path());
}

json RunConfig::fingerprint() const {
  json j;
  j["seed"] = seed;
  j["corpus"] = {{"format", corpus::to_string(corpus_format)},
                 {"min_words", min_words},
                 {"min_contexts", min_contexts},
                 {"posts_per_user", posts_per_user}};
  j["archetypes"] = {{"k", k ? json(*k) : json("auto")}, {"k_range", k_range}, {"restarts", kmeans_restarts},
                     {"labels", archetype_labels}};
  j["providers"] = {{"extraction", provider_json(extraction)},
                    {"assessment", provider_json(assessment)},
                    {"embedding", provider_json(embedding)},
                    {"embedding_dimension", embedding_dimension},
                    {"max_attempts", max_attempts}};
  for (const auto& p : generation) j["providers"]["generation"].push_back(provider_json(p));
  for (const auto& p : reward) j["providers"]["reward"].push_back(provider_json(p));
  j["validation"]["baseline_context"] = baseline_context;
  j["validation"]["heatmap_min_posts"] = heatmap_min_posts;
  for (const auto& h : hypotheses)
    j["validation"]["hypotheses"].push_back(
        {{"id", h.id}, {"context", h.context}, {"dimension", h.dimension}, {"expected_sign", h.expected_sign}});
  j["audit"]["paired_d"] = paired_d;
  for (auto f : report_formats) j["report"]["formats"].push_back(report::extension(f));
  return j;
}

}  // namespace statetrait::pipeline
