#include "statetrait/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "statetrait/archetypes.hpp"
#include "statetrait/audit.hpp"
#include "statetrait/error.hpp"
#include "statetrait/extraction.hpp"
#include "statetrait/profiles.hpp"
#include "statetrait/psychometrics.hpp"
#include "statetrait/scales.hpp"
#include "statetrait/text.hpp"

#ifndef STATETRAIT_VERSION
#define STATETRAIT_VERSION "0.0.0"
#endif

namespace statetrait::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;
namespace ps = psychometrics;
using extraction::Method;

std::string version() { return STATETRAIT_VERSION; }

namespace {

const std::vector<std::pair<Stage, const char*>> kStageNames = {
    {Stage::Ingest, "ingest"},         {Stage::Extract, "extract"},       {Stage::Assess, "assess"},
    {Stage::Fuse, "fuse"},             {Stage::Decompose, "decompose"},   {Stage::Validate, "validate"},
    {Stage::Archetypes, "archetypes"}, {Stage::AuditGen, "audit-gen"},    {Stage::AuditReward, "audit-reward"},
    {Stage::Report, "report"},         {Stage::All, "all"}};

}  // namespace

Stage parse_stage(std::string_view name) {
  for (const auto& [s, n] : kStageNames)
    if (name == n) return s;
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string to_string(Stage s) {
  for (const auto& [st, n] : kStageNames)
    if (st == s) return n;
  return "?";
}

const std::vector<Stage>& stage_order() {
  static const std::vector<Stage> order = {Stage::Ingest,   Stage::Extract,    Stage::Assess,
                                           Stage::Fuse,     Stage::Decompose,  Stage::Validate,
                                           Stage::Archetypes, Stage::AuditGen, Stage::AuditReward,
                                           Stage::Report};
  return order;
}

namespace {

// ---------------------------------------------------------------------------
// Artifact plumbing

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string hash_hex(std::string_view content) { return text::hex64(text::fnv1a64(content)); }

std::vector<json> parse_jsonl(const std::string& data, const std::string& what) {
  std::vector<json> out;
  std::istringstream in(data);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ValidationError(n, what + ": invalid JSON");
    out.push_back(std::move(j));
  }
  return out;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

class Context {
 public:
  Context(const RunConfig& cfg, std::size_t parallelism, std::ostream* log)
      : cfg_(cfg), parallelism_(parallelism), log_(log) {
    retry_.max_attempts = cfg.max_attempts;
  }

  const RunConfig& cfg() const { return cfg_; }
  std::size_t parallelism() const { return parallelism_; }
  const providers::RetryPolicy& retry() const { return retry_; }
  std::uint64_t seed_for(std::string_view name) const { return text::mix64(cfg_.seed ^ text::fnv1a64(name)); }

  void begin(Stage s, StageResult& result) {
    stage_ = to_string(s);
    result_ = &result;
    inputs_ = json::object();
    outputs_ = json::object();
    fs::remove_all(cfg_.output_dir / stage_);
    log("started");
  }

  void log(const std::string& msg) const {
    if (log_) *log_ << "[" << stage_ << "] " << msg << "\n";
  }

  void notice(const std::string& msg) {
    result_->notices.push_back(msg);
    log("notice: " + msg);
  }

  /// Reads an artifact written by `producer`, recording it as an input.
  std::string require(const std::string& rel, Stage producer) {
    const fs::path p = cfg_.output_dir / rel;
    if (!fs::is_regular_file(p)) throw DependencyError(rel, to_string(producer));
    std::string data = read_text(p);
    inputs_[rel] = hash_hex(data);
    return data;
  }

  bool exists(const std::string& rel) const { return fs::is_regular_file(cfg_.output_dir / rel); }

  void record_input(const std::string& name, const fs::path& file) { inputs_[name] = hash_hex(read_text(file)); }

  /// Writes `<stage>/<name>`.
  void write(const std::string& name, const std::string& content) { write_rel(stage_ + "/" + name, content); }

  void write_rel(const std::string& rel, const std::string& content) {
    const fs::path p = cfg_.output_dir / rel;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + p.string() + "'");
    f << content;
    outputs_[rel] = hash_hex(content);
    result_->outputs.push_back(rel);
  }

  void write_table(const std::string& name, const report::Table& t) {
    write(name + ".csv", report::to_csv(t));
    write(name + ".table.json", report::to_json(t).dump(2) + "\n");
  }

  void finish() {
    const std::string cfg_hash = hash_hex(cfg_.fingerprint().dump());
    std::string all = cfg_hash;
    for (const auto& [k, v] : inputs_.items()) all += k + "=" + v.get<std::string>() + ";";
    json m{{"stage", stage_},
           {"version", version()},
           {"seed", cfg_.seed},
           {"config_hash", cfg_hash},
           {"inputs", inputs_},
           {"inputs_hash", hash_hex(all)},
           {"outputs", outputs_},
           {"notices", result_->notices}};
    const fs::path p = cfg_.output_dir / "manifests" / (stage_ + ".json");
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary | std::ios::trunc) << m.dump(2) << "\n";
    log("done");
  }

 private:
  const RunConfig& cfg_;
  std::size_t parallelism_;
  std::ostream* log_;
  providers::RetryPolicy retry_;
  std::string stage_;
  StageResult* result_ = nullptr;
  json inputs_;
  json outputs_;
};

// ---------------------------------------------------------------------------
// Shared loaders

scales::ScaleRegistry load_registry(Context& ctx) {
  if (!ctx.cfg().registry_path) return scales::default_registry();
  ctx.record_input("registry", *ctx.cfg().registry_path);
  return scales::load_registry_file(ctx.cfg().registry_path->string());
}

archetypes::Thresholds load_thresholds(Context& ctx) {
  if (!ctx.cfg().thresholds_path) return archetypes::default_thresholds();
  ctx.record_input("thresholds", *ctx.cfg().thresholds_path);
  return archetypes::load_thresholds_file(ctx.cfg().thresholds_path->string());
}

std::vector<corpus::Post> load_posts(Context& ctx) {
  return corpus::ingest_string(ctx.require("ingest/posts.jsonl", Stage::Ingest), corpus::Format::Jsonl);
}

providers::HttpConfig http_config(const ProviderConfig& p) {
  return {p.base_url, p.model, p.credential_env, p.timeout_seconds};
}

bool use_mock(const ProviderConfig& p, bool force_mock) { return force_mock || p.kind == "mock"; }

struct FusedTable {
  std::vector<std::string> dimensions;
  std::vector<std::string> post_ids, user_ids, context_ids;
  Eigen::MatrixXd fused, lex, sem;
};

FusedTable load_fused(Context& ctx) {
  const json norm = json::parse(ctx.require("fuse/normalizer.json", Stage::Fuse));
  const auto rows = parse_jsonl(ctx.require("fuse/profiles.jsonl", Stage::Fuse), "fuse/profiles.jsonl");
  FusedTable t;
  t.dimensions = norm.at("dimensions").get<std::vector<std::string>>();
  const auto n = static_cast<Eigen::Index>(rows.size()), d = static_cast<Eigen::Index>(t.dimensions.size());
  t.fused.resize(n, d);
  t.lex.resize(n, d);
  t.sem.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const json& r = rows[static_cast<std::size_t>(i)];
    t.post_ids.push_back(r.at("post_id"));
    t.user_ids.push_back(r.at("user_id"));
    t.context_ids.push_back(r.at("context_id"));
    for (const auto& [key, m] : {std::pair{"fused", &t.fused}, std::pair{"lex", &t.lex}, std::pair{"sem", &t.sem}}) {
      const auto v = r.at(key).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != d) throw ValidationError(static_cast<std::size_t>(i) + 1, "profile width");
      for (Eigen::Index j = 0; j < d; ++j) (*m)(i, j) = v[static_cast<std::size_t>(j)];
    }
  }
  return t;
}

struct CardEntry {
  std::string label;
  std::string text;
};

std::vector<CardEntry> load_cards(Context& ctx) {
  const json doc = json::parse(ctx.require("archetypes/cards.json", Stage::Archetypes));
  std::vector<CardEntry> out;
  for (const auto& c : doc.at("cards")) out.push_back({c.at("label"), c.at("text")});
  return out;
}

std::vector<audit::Question> load_question_set(Context& ctx) {
  const auto& cfg = ctx.cfg();
  std::vector<audit::Question> qs;
  if (cfg.dilemmas_path) {
    ctx.record_input("dilemmas", *cfg.dilemmas_path);
    qs = audit::load_questions_file(cfg.dilemmas_path->string());
  } else {
    qs = audit::bundled_dilemmas();
  }
  std::vector<audit::Question> ops;
  if (cfg.opinions_path) {
    ctx.record_input("opinions", *cfg.opinions_path);
    ops = audit::load_questions_file(cfg.opinions_path->string());
  } else {
    ops = audit::bundled_opinion_examples();
  }
  std::set<std::string> ids;
  for (const auto& q : qs) ids.insert(q.id);
  for (auto& q : ops) {
    if (!ids.insert(q.id).second) throw ConfigError("question id '" + q.id + "' appears in both question files");
    qs.push_back(std::move(q));
  }
  return qs;
}

std::vector<audit::Condition> load_conditions(Context& ctx) {
  std::vector<std::pair<std::string, std::string>> cards;
  for (auto& c : load_cards(ctx)) cards.emplace_back(std::move(c.label), std::move(c.text));
  return audit::make_conditions(cards);
}

json question_json(const audit::Question& q) {
  return {{"id", q.id}, {"text", q.text}, {"source", audit::to_string(q.source)}, {"category", q.category}};
}

std::string holes_jsonl(const std::vector<audit::Hole>& holes) {
  std::vector<json> rows;
  for (const auto& h : holes)
    rows.push_back({{"model", h.model}, {"question_id", h.question_id}, {"condition", h.condition}, {"error", h.error}});
  return to_jsonl(rows);
}

// ---------------------------------------------------------------------------
// Stages

int stage_ingest(Context& ctx) {
  const auto& cfg = ctx.cfg();
  ctx.record_input("corpus", cfg.corpus_path);
  const auto posts = corpus::ingest_file(cfg.corpus_path.string(), cfg.corpus_format);
  const auto eligible = corpus::filter_eligible(posts, cfg.min_words, cfg.min_contexts);
  const auto sampled = corpus::sample_per_user(eligible, cfg.posts_per_user, ctx.seed_for("ingest"));
  if (sampled.empty()) throw PreconditionError("no user meets the eligibility rules");
  ctx.log(std::to_string(posts.size()) + " posts read, " + std::to_string(sampled.size()) + " sampled");
  ctx.write("posts.jsonl", corpus::to_jsonl(sampled));
  ctx.write("input_manifest.json", corpus::to_json(corpus::corpus_stats(posts)) + "\n");
  ctx.write("manifest.json", corpus::to_json(corpus::corpus_stats(sampled)) + "\n");
  return kExitOk;
}

int stage_extract(Context& ctx, bool force_mock) {
  const auto& cfg = ctx.cfg();
  const auto posts = load_posts(ctx);
  std::vector<extraction::LexiconDictionary> lexicons;
  if (cfg.lexicon_paths.empty()) {
    lexicons.push_back(extraction::demo_lexicon());
  } else {
    for (const auto& p : cfg.lexicon_paths) {
      ctx.record_input("lexicon:" + p.filename().string(), p);
      lexicons.push_back(extraction::load_lexicon_file(p.string()));
    }
  }
  std::unique_ptr<providers::CompletionProvider> provider;
  if (use_mock(cfg.extraction, force_mock))
    provider = std::make_unique<providers::SemanticPatternMock>(cfg.extraction.seed.value_or(ctx.seed_for("extract")),
                                                                cfg.extraction.model);
  else
    provider = providers::make_http_completion(http_config(cfg.extraction));

  struct Out {
    extraction::FeatureVector lex;
    std::optional<std::vector<extraction::SemanticPattern>> patterns;
    std::string error;
  };
  const auto results = providers::parallel_map<Out>(posts.size(), ctx.parallelism(), [&](std::size_t i) {
    Out o;
    o.lex = extraction::extract_lexicon_features(posts[i].text, lexicons);
    try {
      o.patterns = extraction::extract_semantic_patterns(posts[i].text, *provider, ctx.retry());
    } catch (const Error& e) {
      o.error = e.what();
    }
    return o;
  });

  std::vector<json> lex_rows, pattern_rows, sem_rows, failures;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    lex_rows.push_back({{"post_id", posts[i].id}, {"features", results[i].lex.features}});
    if (!results[i].patterns) {
      failures.push_back({{"post_id", posts[i].id}, {"method", "sem"}, {"error", results[i].error}});
      continue;
    }
    json pats = json::array();
    for (const auto& p : *results[i].patterns) pats.push_back(extraction::to_json(p));
    pattern_rows.push_back({{"post_id", posts[i].id}, {"patterns", pats}});
    sem_rows.push_back({{"post_id", posts[i].id}, {"features", extraction::patterns_to_features(*results[i].patterns).features}});
  }
  if (!failures.empty()) ctx.notice(std::to_string(failures.size()) + " posts failed semantic extraction");
  ctx.write("lex_features.jsonl", to_jsonl(lex_rows));
  ctx.write("sem_patterns.jsonl", to_jsonl(pattern_rows));
  ctx.write("sem_features.jsonl", to_jsonl(sem_rows));
  ctx.write("failures.jsonl", to_jsonl(failures));
  return kExitOk;
}

int stage_assess(Context& ctx, bool force_mock) {
  const auto& cfg = ctx.cfg();
  const auto registry = load_registry(ctx);
  struct Task {
    std::string post_id;
    extraction::FeatureVector features;
  };
  std::vector<Task> tasks;
  for (const auto& [file, method] : {std::pair{"extract/lex_features.jsonl", Method::Lex},
                                     std::pair{"extract/sem_features.jsonl", Method::Sem}}) {
    for (const auto& r : parse_jsonl(ctx.require(file, Stage::Extract), file)) {
      Task t{r.at("post_id"), {method, r.at("features").get<std::map<std::string, double>>()}};
      tasks.push_back(std::move(t));
    }
  }
  std::unique_ptr<providers::CompletionProvider> provider;
  if (use_mock(cfg.assessment, force_mock))
    provider = std::make_unique<providers::ScaleAssessmentMock>(cfg.assessment.seed.value_or(ctx.seed_for("assess")),
                                                                providers::ScaleAssessmentMock::Mode::Hashed, 0.0,
                                                                cfg.assessment.model);
  else
    provider = providers::make_http_completion(http_config(cfg.assessment));

  struct Out {
    std::optional<scales::ItemAssessment> items;
    std::optional<scales::RawProfile> profile;
    std::string error;
  };
  const auto results = providers::parallel_map<Out>(tasks.size(), ctx.parallelism(), [&](std::size_t i) {
    Out o;
    try {
      o.items = scales::assess_items(tasks[i].features, registry, *provider, ctx.retry());
      o.profile = scales::score_subscales(o.items->responses, registry, tasks[i].features.method, tasks[i].post_id);
    } catch (const Error& e) {
      o.error = e.what();
    }
    return o;
  });
  std::vector<json> profiles, items, failures;
  std::size_t warnings = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string method = extraction::to_string(tasks[i].features.method);
    if (!results[i].profile) {
      failures.push_back({{"post_id", tasks[i].post_id}, {"method", method}, {"error", results[i].error}});
      continue;
    }
    const auto& p = *results[i].profile;
    json scores = json::object();
    for (std::size_t d = 0; d < p.dimensions.size(); ++d) scores[p.dimensions[d]] = p.scores[d];
    profiles.push_back({{"post_id", p.post_id}, {"method", method}, {"scores", scores}});
    items.push_back({{"post_id", p.post_id},
                     {"method", method},
                     {"responses", results[i].items->responses},
                     {"warnings", results[i].items->warnings}});
    warnings += results[i].items->warnings.size();
  }
  if (warnings) ctx.notice(std::to_string(warnings) + " item responses were clamped into range");
  if (!failures.empty()) ctx.notice(std::to_string(failures.size()) + " assessments failed");
  ctx.write("raw_profiles.jsonl", to_jsonl(profiles));
  ctx.write("item_responses.jsonl", to_jsonl(items));
  ctx.write("failures.jsonl", to_jsonl(failures));
  return kExitOk;
}

int stage_fuse(Context& ctx) {
  const auto registry = load_registry(ctx);
  const auto dims = registry.dimension_names();
  const auto posts = load_posts(ctx);
  std::vector<scales::RawProfile> raw;
  for (const auto& r : parse_jsonl(ctx.require("assess/raw_profiles.jsonl", Stage::Assess), "raw_profiles")) {
    scales::RawProfile p{r.at("post_id"), extraction::parse_method(r.at("method").get<std::string>()), dims, {}};
    for (const auto& d : dims) p.scores.push_back(r.at("scores").at(d).get<double>());
    raw.push_back(std::move(p));
  }
  const auto norm = profiles::fit_normalizer(raw);
  std::map<std::string, const scales::RawProfile*> lex, sem;
  for (const auto& p : raw) (p.method == Method::Lex ? lex : sem)[p.post_id] = &p;

  std::vector<json> rows;
  std::vector<std::vector<double>> population;
  std::size_t dropped = 0;
  for (const auto& post : posts) {
    const auto l = lex.find(post.id), s = sem.find(post.id);
    if (l == lex.end() || s == sem.end()) {
      ++dropped;
      continue;
    }
    const auto f = profiles::fuse(profiles::normalize(*l->second, norm), profiles::normalize(*s->second, norm),
                                  post.user_id, post.context_id);
    rows.push_back({{"post_id", f.post_id},
                    {"user_id", f.user_id},
                    {"context_id", f.context_id},
                    {"fused", f.z},
                    {"lex", f.lex.z},
                    {"sem", f.sem.z},
                    {"agreement", profiles::profile_agreement(f.lex, f.sem) ? json(*profiles::profile_agreement(f.lex, f.sem))
                                                                           : json(nullptr)}});
    std::vector<double> mid(dims.size());
    for (std::size_t d = 0; d < dims.size(); ++d) mid[d] = 0.5 * (l->second->scores[d] + s->second->scores[d]);
    population.push_back(std::move(mid));
  }
  if (dropped) ctx.notice(std::to_string(dropped) + " posts lack one of the two method profiles and were dropped");
  if (rows.size() < 2) throw PreconditionError("fewer than 2 fused profiles");

  json nj{{"dimensions", dims}};
  for (Method m : {Method::Lex, Method::Sem}) {
    json arr = json::array();
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const auto& st = norm.at(m, d);
      arr.push_back({{"mean", st.mean}, {"sd", st.sd}, {"n", st.n}, {"degenerate", st.degenerate}});
      if (st.degenerate) ctx.notice(extraction::to_string(m) + "." + dims[d] + " has zero variance; z set to 0");
    }
    nj[extraction::to_string(m)] = arr;
  }
  std::vector<double> mean(dims.size()), sd(dims.size());
  for (std::size_t d = 0; d < dims.size(); ++d) {
    std::vector<double> col;
    for (const auto& p : population) col.push_back(p[d]);
    mean[d] = ps::mean(col);
    sd[d] = ps::sample_sd(col);
  }
  ctx.write("normalizer.json", nj.dump(2) + "\n");
  ctx.write("profiles.jsonl", to_jsonl(rows));
  ctx.write("population.json", json{{"dimensions", dims}, {"mean", mean}, {"sd", sd}}.dump(2) + "\n");
  return kExitOk;
}

int stage_decompose(Context& ctx) {
  const auto t = load_fused(ctx);
  std::vector<ps::MethodProfiles> methods{{"lex", t.dimensions, t.lex, t.user_ids},
                                          {"sem", t.dimensions, t.sem, t.user_ids},
                                          {"fused", t.dimensions, t.fused, t.user_ids}};
  const auto d = ps::decompose_all(methods);
  for (const auto& m : d) {
    std::string names;
    for (const auto& x : m.dimensions)
      if (x.clamped) names += (names.empty() ? "" : ", ") + x.dimension;
    if (!names.empty()) ctx.notice(m.method + ": negative ICC estimates clamped to 0 for " + names);
  }
  ctx.write_table("decomposition_summary", report::decomposition_summary_table(d));
  ctx.write_table("decomposition_dimensions", report::decomposition_dimension_table(d));
  return kExitOk;
}

int stage_validate(Context& ctx) {
  const auto& cfg = ctx.cfg();
  const auto t = load_fused(ctx);
  ctx.write_table("mtmm", report::mtmm_table(ps::mtmm_matrix(t.lex, t.sem), t.dimensions));

  // Profile-level agreement.
  const auto rows = parse_jsonl(ctx.require("fuse/profiles.jsonl", Stage::Fuse), "profiles");
  std::vector<double> agree;
  for (const auto& r : rows)
    if (!r.at("agreement").is_null()) agree.push_back(r.at("agreement").get<double>());
  json aj{{"n", agree.size()}};
  if (!agree.empty()) {
    auto sorted = agree;
    std::sort(sorted.begin(), sorted.end());
    const auto frac = [&](double c) {
      return static_cast<double>(std::count_if(agree.begin(), agree.end(), [&](double v) { return v > c; })) /
             static_cast<double>(agree.size());
    };
    aj["mean"] = ps::mean(agree);
    aj["median_lower"] = sorted[(sorted.size() - 1) / 2];
    aj["frac_above_0_7"] = frac(0.7);
    aj["frac_above_0_5"] = frac(0.5);
  }
  ctx.write("profile_agreement.json", aj.dump(2) + "\n");

  // Context hypotheses.
  const std::set<std::string> contexts(t.context_ids.begin(), t.context_ids.end());
  const std::vector<std::string> methods{"lex", "sem", "fused"};
  std::vector<report::HypothesisFit> fits;
  for (const auto& h : cfg.hypotheses) {
    report::HypothesisFit fit{h.id, h.context, h.dimension, {}};
    const auto dim = std::find(t.dimensions.begin(), t.dimensions.end(), h.dimension);
    if (dim == t.dimensions.end()) {
      ctx.notice(h.id + " skipped: unknown dimension '" + h.dimension + "'");
    } else if (!contexts.count(cfg.baseline_context)) {
      ctx.notice(h.id + " skipped: baseline context '" + cfg.baseline_context + "' absent");
    } else if (!contexts.count(h.context)) {
      ctx.notice(h.id + " skipped: context '" + h.context + "' absent");
    } else {
      const auto col = static_cast<Eigen::Index>(dim - t.dimensions.begin());
      for (const auto& [name, m] : {std::pair{"lex", &t.lex}, std::pair{"sem", &t.sem}, std::pair{"fused", &t.fused}}) {
        std::vector<double> y(static_cast<std::size_t>(m->rows()));
        for (Eigen::Index i = 0; i < m->rows(); ++i) y[static_cast<std::size_t>(i)] = (*m)(i, col);
        try {
          const auto f = ps::fit_random_intercept(y, t.context_ids, t.user_ids, cfg.baseline_context);
          if (const auto* c = f.find(h.context)) fit.by_method.emplace_back(name, *c);
          if (!f.converged) ctx.notice(h.id + "/" + name + ": variance search did not converge");
        } catch (const Error& e) {
          ctx.notice(h.id + "/" + name + " skipped: " + e.what());
        }
      }
    }
    fits.push_back(std::move(fit));
  }
  ctx.write_table("regression", report::regression_table(fits, methods));

  // Dimensions x contexts mean fused z.
  std::map<std::string, std::vector<Eigen::Index>> by_context;
  for (std::size_t i = 0; i < t.context_ids.size(); ++i) by_context[t.context_ids[i]].push_back(static_cast<Eigen::Index>(i));
  report::Table heat{{"dimension"}, {}};
  std::vector<const std::vector<Eigen::Index>*> cols;
  for (const auto& [c, idx] : by_context)
    if (idx.size() >= cfg.heatmap_min_posts) {
      heat.columns.push_back(c);
      cols.push_back(&idx);
    }
  if (cols.empty()) ctx.notice("no context reaches heatmap_min_posts; heatmap is empty");
  for (std::size_t d = 0; d < t.dimensions.size(); ++d) {
    std::vector<std::string> row{t.dimensions[d]};
    for (const auto* idx : cols) {
      double s = 0;
      for (auto i : *idx) s += t.fused(i, static_cast<Eigen::Index>(d));
      row.push_back(report::num(s / static_cast<double>(idx->size()), 4));
    }
    heat.rows.push_back(std::move(row));
  }
  ctx.write_table("profile_heatmap", heat);
  return kExitOk;
}

int stage_archetypes(Context& ctx) {
  const auto& cfg = ctx.cfg();
  const auto t = load_fused(ctx);
  const auto registry = load_registry(ctx);
  const auto thresholds = load_thresholds(ctx);
  const json pop = json::parse(ctx.require("fuse/population.json", Stage::Fuse));
  archetypes::PopulationStats stats{pop.at("dimensions"), pop.at("mean"), pop.at("sd")};

  const auto rows = static_cast<int>(t.fused.rows());
  archetypes::KMeansOptions opt;
  opt.restarts = cfg.kmeans_restarts;
  opt.parallelism = ctx.parallelism();
  const std::uint64_t seed = ctx.seed_for("archetypes");

  std::vector<int> k_range;
  for (int k : cfg.k_range)
    if (k >= 2 && k <= rows - 1) k_range.push_back(k);
  report::Table sil{{"k", "silhouette"}, {}};
  std::optional<archetypes::KSelection> sel;
  if (k_range.empty()) {
    ctx.notice("no k in k_range fits the number of profiles; silhouette table is empty");
  } else {
    sel = archetypes::select_k(t.fused, k_range, seed, opt);
    for (const auto& [k, s] : sel->silhouettes) sil.rows.push_back({std::to_string(k), report::num(s)});
  }
  ctx.write_table("silhouette", sil);
  int k = 0;
  if (cfg.k) {
    k = *cfg.k;
  } else {
    if (!sel) throw ConfigError("k = auto needs a usable k_range");
    k = sel->best_k;
  }
  if (k > rows) throw ConfigError("k = " + std::to_string(k) + " exceeds the number of profiles");
  auto model = archetypes::kmeans(t.fused, k, seed, opt);
  std::vector<std::string> labels = cfg.archetype_labels;
  if (labels.empty()) {
    if (k == static_cast<int>(archetypes::kDefaultLabels.size())) {
      labels = archetypes::kDefaultLabels;
    } else {
      for (int i = 0; i < k; ++i) labels.push_back("Archetype-" + std::to_string(i + 1));
    }
  }
  archetypes::set_labels(model, labels);
  if (!model.converged) ctx.notice("k-means hit the iteration cap");
  if (model.reseeded_clusters) ctx.notice(std::to_string(model.reseeded_clusters) + " empty clusters were reseeded");

  report::Table assign{{"post_id", "user_id", "context_id", "archetype", "cluster"}, {}};
  std::map<std::string, std::vector<int>> by_user;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < t.post_ids.size(); ++i) {
    const int c = model.assignments[i];
    ++sizes[static_cast<std::size_t>(c)];
    by_user[t.user_ids[i]].push_back(c);
    assign.rows.push_back({t.post_ids[i], t.user_ids[i], t.context_ids[i], model.labels[static_cast<std::size_t>(c)],
                           std::to_string(c)});
  }
  ctx.write_table("assignments", assign);
  const auto div = archetypes::diversity_stats(by_user);
  ctx.write("diversity.json", json{{"n_users", div.n_users},
                                   {"frac_one", div.frac_one},
                                   {"frac_two", div.frac_two},
                                   {"frac_three_plus", div.frac_three_plus},
                                   {"frac_at_least_two", div.frac_at_least_two}}
                                  .dump(2) + "\n");

  json cards = json::array();
  std::string cards_txt;
  json centroids = json::array();
  for (int c = 0; c < k; ++c) {
    const Eigen::VectorXd z = model.centroids.row(c).transpose();
    std::vector<double> zv(z.data(), z.data() + z.size());
    centroids.push_back(zv);
    const auto card = archetypes::render_profile_card(z, stats, registry, thresholds, model.labels[static_cast<std::size_t>(c)]);
    const auto ex = archetypes::nearest_exemplar(z, t.fused);
    cards.push_back({{"label", card.label},
                     {"cluster", c},
                     {"size", sizes[static_cast<std::size_t>(c)]},
                     {"exemplar_post_id", t.post_ids[ex]},
                     {"top_values", card.top_values},
                     {"text", card.text()}});
    cards_txt += "== " + card.label + " (n=" + std::to_string(sizes[static_cast<std::size_t>(c)]) + ")\n" + card.text() + "\n";
  }
  ctx.write("model.json", json{{"k", k},
                               {"seed", model.seed},
                               {"labels", model.labels},
                               {"dimensions", t.dimensions},
                               {"centroids", centroids},
                               {"inertia", model.inertia},
                               {"iterations", model.iterations},
                               {"converged", model.converged}}
                              .dump(2) + "\n");
  ctx.write("cards.json", json{{"cards", cards}}.dump(2) + "\n");
  ctx.write("cards.txt", cards_txt);
  return kExitOk;
}

int stage_audit_gen(Context& ctx, bool force_mock) {
  const auto& cfg = ctx.cfg();
  const auto questions = load_question_set(ctx);
  const auto conditions = load_conditions(ctx);
  std::vector<std::unique_ptr<providers::CompletionProvider>> owned;
  std::vector<providers::CompletionProvider*> models;
  for (std::size_t i = 0; i < cfg.generation.size(); ++i) {
    const auto& p = cfg.generation[i];
    if (use_mock(p, force_mock))
      owned.push_back(std::make_unique<providers::TemplateCompletionMock>(
          p.seed.value_or(text::mix64(ctx.seed_for("audit-gen") + i)), p.model));
    else
      owned.push_back(providers::make_http_completion(http_config(p)));
    models.push_back(owned.back().get());
  }
  audit::GridOptions opt;
  opt.parallelism = ctx.parallelism();
  opt.retry = ctx.retry();
  const auto grid = audit::run_generation_grid(questions, conditions, models, opt);

  std::vector<json> qrows, cells;
  for (const auto& q : questions) qrows.push_back(question_json(q));
  for (std::size_t m = 0; m < grid.models.size(); ++m)
    for (std::size_t q = 0; q < questions.size(); ++q)
      for (std::size_t c = 0; c < conditions.size(); ++c)
        if (const auto& v = grid.cell(m, q, c))
          cells.push_back({{"model", grid.models[m]}, {"question_id", questions[q].id},
                           {"condition", conditions[c].name}, {"text", *v}});
  ctx.write("questions.jsonl", to_jsonl(qrows));
  ctx.write("generation_grid.jsonl", to_jsonl(cells));
  ctx.write("holes.jsonl", holes_jsonl(grid.holes));
  if (!grid.complete()) {
    ctx.notice(std::to_string(grid.holes.size()) + " generation cells failed; sensitivity report skipped");
    return kExitPartial;
  }

  std::unique_ptr<providers::EmbeddingProvider> embedder;
  if (use_mock(cfg.embedding, force_mock))
    embedder = std::make_unique<providers::HashedBowEmbedder>(cfg.embedding_dimension, cfg.embedding.seed.value_or(0));
  else
    embedder = providers::make_http_embedding(http_config(cfg.embedding), cfg.embedding_dimension);
  const auto mats = audit::pairwise_similarity(grid, *embedder, opt);
  std::vector<json> srows;
  for (const auto& s : mats) {
    json mat = json::array();
    for (Eigen::Index i = 0; i < s.sim.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(s.sim.cols()));
      for (Eigen::Index j = 0; j < s.sim.cols(); ++j) row[static_cast<std::size_t>(j)] = s.sim(i, j);
      mat.push_back(row);
    }
    srows.push_back({{"model", s.model}, {"question_id", s.question_id}, {"source", audit::to_string(s.source)}, {"sim", mat}});
  }
  ctx.write("similarity.jsonl", to_jsonl(srows));
  const auto rep = audit::sensitivity_report(mats, conditions);
  for (const auto& n : rep.notices) ctx.notice(n);
  ctx.write_table("sensitivity_models", report::sensitivity_model_table(rep));
  ctx.write_table("sensitivity_tests", report::sensitivity_test_table(rep));
  ctx.write_table("baseline_deviation", report::baseline_deviation_table(rep));
  ctx.write_table("condition_pairs", report::condition_pair_table(rep));
  ctx.write("sensitivity.json", report::to_json(rep).dump(2) + "\n");
  return kExitOk;
}

int stage_audit_reward(Context& ctx, bool force_mock) {
  const auto& cfg = ctx.cfg();
  auto questions = load_question_set(ctx);
  const auto conditions = load_conditions(ctx);

  // Reference responses: one per question, baseline prompt, first generation model; cached across runs.
  const auto& ref_cfg = cfg.generation.front();
  std::unique_ptr<providers::CompletionProvider> ref_model;
  if (use_mock(ref_cfg, force_mock))
    ref_model = std::make_unique<providers::TemplateCompletionMock>(
        ref_cfg.seed.value_or(text::mix64(ctx.seed_for("audit-gen") + 0)), ref_cfg.model);
  else
    ref_model = providers::make_http_completion(http_config(ref_cfg));
  const std::string cache_rel = "cache/reference_responses.jsonl";
  std::map<std::string, std::string> cache;
  if (ctx.exists(cache_rel))
    for (const auto& r : parse_jsonl(read_text(cfg.output_dir / cache_rel), cache_rel))
      if (r.value("model", "") == ref_model->model_id())
        cache[r.value("text_hash", "")] = r.value("response", "");
  std::vector<std::optional<std::string>> refs = providers::parallel_map<std::optional<std::string>>(
      questions.size(), ctx.parallelism(), [&](std::size_t i) -> std::optional<std::string> {
        if (const auto it = cache.find(hash_hex(questions[i].text)); it != cache.end()) return it->second;
        providers::CompletionRequest req;
        req.user_text = questions[i].text;
        req.tag = "Baseline";
        try {
          return providers::with_retry(ctx.retry(), [&] { return ref_model->complete(req); });
        } catch (const Error&) {
          return std::nullopt;
        }
      });
  std::vector<json> cache_rows;
  std::vector<audit::Question> kept;
  std::vector<std::string> responses;
  std::vector<audit::Hole> ref_holes;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (!refs[i]) {
      ref_holes.push_back({ref_model->model_id(), questions[i].id, "reference", "reference response failed"});
      continue;
    }
    cache_rows.push_back({{"question_id", questions[i].id}, {"model", ref_model->model_id()},
                          {"text_hash", hash_hex(questions[i].text)}, {"response", *refs[i]}});
    kept.push_back(questions[i]);
    responses.push_back(*refs[i]);
  }
  ctx.write_rel(cache_rel, to_jsonl(cache_rows));
  if (kept.empty()) throw PreconditionError("no reference responses could be generated");

  std::vector<std::unique_ptr<providers::RewardProvider>> owned;
  std::vector<providers::RewardProvider*> models;
  for (const auto& p : cfg.reward) {
    if (use_mock(p, force_mock))
      owned.push_back(std::make_unique<providers::RewardMock>(p.model, p.seed.value_or(ctx.seed_for("audit-reward")),
                                                              p.delta, p.card_scale));
    else
      owned.push_back(providers::make_http_reward(http_config(p)));
    models.push_back(owned.back().get());
  }
  audit::GridOptions opt;
  opt.parallelism = ctx.parallelism();
  opt.retry = ctx.retry();
  const auto grid = audit::run_reward_grid(kept, responses, conditions, models, opt);
  std::vector<json> cells;
  for (std::size_t m = 0; m < grid.models.size(); ++m)
    for (std::size_t q = 0; q < kept.size(); ++q)
      for (std::size_t c = 0; c < conditions.size(); ++c)
        if (const auto& v = grid.cell(m, q, c))
          cells.push_back({{"model", grid.models[m]}, {"question_id", kept[q].id},
                           {"source", audit::to_string(kept[q].source)}, {"condition", conditions[c].name},
                           {"score", *v}});
  auto holes = ref_holes;
  holes.insert(holes.end(), grid.holes.begin(), grid.holes.end());
  ctx.write("reward_grid.jsonl", to_jsonl(cells));
  ctx.write("holes.jsonl", holes_jsonl(holes));

  audit::InvarianceOptions io;
  io.paired = cfg.paired_d;
  const auto rep = audit::invariance_report(grid, io);
  for (const auto& n : rep.notices) ctx.notice(n);
  ctx.write_table("reward_directions", report::reward_direction_table(rep));
  ctx.write_table("reward_datasets", report::reward_dataset_table(rep));
  ctx.write_table("reward_archetypes", report::reward_archetype_table(rep));
  ctx.write_table("reward_effects", report::reward_effect_table(rep));
  ctx.write("invariance.json", report::to_json(rep).dump(2) + "\n");
  if (!holes.empty()) {
    ctx.notice(std::to_string(holes.size()) + " reward cells are missing");
    return kExitPartial;
  }
  return kExitOk;
}

struct ReportEntry {
  const char* rel;  ///< without ".table.json"
  const char* title;
  bool heatmap;
};

constexpr ReportEntry kReportTables[] = {
    {"decompose/decomposition_summary", "Variance decomposition by method", false},
    {"decompose/decomposition_dimensions", "Variance decomposition by dimension", false},
    {"validate/regression", "Context effects (random-intercept model, Wald intervals)", false},
    {"validate/mtmm", "Multi-trait multi-method correlations", true},
    {"validate/profile_heatmap", "Mean fused z by context", true},
    {"archetypes/silhouette", "Silhouette by k", false},
    {"archetypes/assignments", "Archetype assignments", false},
    {"audit-gen/sensitivity_models", "Response similarity by model", false},
    {"audit-gen/sensitivity_tests", "Similarity tests", false},
    {"audit-gen/baseline_deviation", "Baseline deviation by archetype", false},
    {"audit-gen/condition_pairs", "Condition pair similarities", false},
    {"audit-reward/reward_directions", "Reward model direction", false},
    {"audit-reward/reward_datasets", "Reward effects by dataset", false},
    {"audit-reward/reward_archetypes", "Cohen's d by archetype and reward model", true},
    {"audit-reward/reward_effects", "Reward effects (long form)", false},
};

int stage_report(Context& ctx) {
  const auto& cfg = ctx.cfg();
  ctx.require("decompose/decomposition_summary.table.json", Stage::Decompose);
  json index = json::array();
  for (const auto& e : kReportTables) {
    const std::string rel = std::string(e.rel) + ".table.json";
    if (!ctx.exists(rel)) {
      ctx.notice(std::string(e.rel) + " not available; skipped");
      continue;
    }
    const auto table = report::table_from_json(json::parse(ctx.require(rel, Stage::Report)));
    const std::string base = std::string(e.rel).substr(std::string(e.rel).find('/') + 1);
    json files = json::array();
    for (auto f : cfg.report_formats) {
      if (f == report::Format::SvgHeatmap && (!e.heatmap || table.rows.empty() || table.columns.size() < 2)) continue;
      const std::string name = base + report::extension(f);
      ctx.write(name, report::emit(table, f, e.title));
      files.push_back(name);
    }
    index.push_back({{"table", base}, {"title", e.title}, {"files", files}, {"rows", table.rows.size()}});
  }
  for (const char* extra : {"archetypes/cards.txt", "audit-gen/sensitivity.json", "audit-reward/invariance.json"}) {
    if (!ctx.exists(extra)) continue;
    const std::string name = std::string(extra).substr(std::string(extra).find('/') + 1);
    ctx.write(name, ctx.require(extra, Stage::Report));
    index.push_back({{"table", name}, {"files", {name}}});
  }
  ctx.write("index.json", json{{"version", version()}, {"seed", cfg.seed}, {"artifacts", index}}.dump(2) + "\n");
  return kExitOk;
}

int run_stage(Stage s, Context& ctx, bool force_mock) {
  switch (s) {
    case Stage::Ingest: return stage_ingest(ctx);
    case Stage::Extract: return stage_extract(ctx, force_mock);
    case Stage::Assess: return stage_assess(ctx, force_mock);
    case Stage::Fuse: return stage_fuse(ctx);
    case Stage::Decompose: return stage_decompose(ctx);
    case Stage::Validate: return stage_validate(ctx);
    case Stage::Archetypes: return stage_archetypes(ctx);
    case Stage::AuditGen: return stage_audit_gen(ctx, force_mock);
    case Stage::AuditReward: return stage_audit_reward(ctx, force_mock);
    case Stage::Report: return stage_report(ctx);
    case Stage::All: break;
  }
  throw ConfigError("stage 'all' cannot run as a single stage");
}

}  // namespace

RunResult run(Stage stage, RunConfig config, const RunOptions& options) {
  RunResult out;
  if (options.seed) config.seed = *options.seed;
  if (options.output_dir) config.output_dir = *options.output_dir;
  const std::size_t parallelism = options.parallelism.value_or(config.parallelism);
  if (parallelism == 0) {
    out.exit_code = kExitError;
    out.error = "parallelism must be positive";
    return out;
  }
  Context ctx(config, parallelism, options.log);
  const std::vector<Stage> stages = stage == Stage::All ? stage_order() : std::vector<Stage>{stage};
  for (Stage s : stages) {
    out.stages.push_back({s, kExitOk, {}, {}});
    StageResult& r = out.stages.back();
    try {
      ctx.begin(s, r);
      r.exit_code = run_stage(s, ctx, options.force_mock);
      ctx.finish();
    } catch (const Error& e) {
      r.exit_code = kExitError;
      out.exit_code = kExitError;
      out.error = to_string(s) + ": " + e.what();
      if (options.log) *options.log << "[" << to_string(s) << "] error: " << e.what() << "\n";
      return out;
    } catch (const std::exception& e) {
      r.exit_code = kExitError;
      out.exit_code = kExitError;
      out.error = to_string(s) + ": unexpected failure: " + e.what();
      if (options.log) *options.log << "[" << to_string(s) << "] error: " << e.what() << "\n";
      return out;
    }
    out.exit_code = std::max(out.exit_code, r.exit_code);
  }
  return out;
}

}  // namespace statetrait::pipeline
