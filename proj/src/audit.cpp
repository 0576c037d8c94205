#include "statetrait/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "statetrait/embedded.hpp"
#include "statetrait/error.hpp"
#include "statetrait/text.hpp"

namespace statetrait::audit {

using nlohmann::json;
namespace ps = psychometrics;

std::string to_string(QuestionSource s) { return s == QuestionSource::Opinion ? "opinion" : "dilemma"; }

std::vector<Question> parse_questions(std::string_view jsonl) {
  std::vector<Question> out;
  std::set<std::string> ids;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError(n, "question is not a JSON object");
    Question q;
    try {
      q.id = j.at("id").get<std::string>();
      q.text = j.at("text").get<std::string>();
      const std::string src = j.at("source").get<std::string>();
      if (src == "opinion")
        q.source = QuestionSource::Opinion;
      else if (src == "dilemma")
        q.source = QuestionSource::Dilemma;
      else
        throw ValidationError(n, "source must be 'opinion' or 'dilemma'");
      if (auto c = j.find("category"); c != j.end() && c->is_string()) q.category = c->get<std::string>();
    } catch (const json::exception& e) {
      throw ValidationError(n, e.what());
    }
    if (text::trim(q.text).empty()) throw ValidationError(n, "question text is empty");
    if (!ids.insert(q.id).second) throw ValidationError(n, "duplicate question id '" + q.id + "'");
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<Question> load_questions_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open questions '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_questions(ss.str());
}

std::vector<Question> bundled_dilemmas() { return parse_questions(*embedded::lookup("questions_dilemmas.jsonl")); }

std::vector<Question> bundled_opinion_examples() {
  return parse_questions(*embedded::lookup("questions_opinion_examples.jsonl"));
}

std::vector<Condition> make_conditions(const std::vector<std::pair<std::string, std::string>>& cards) {
  std::vector<Condition> out{{ConditionKind::Baseline, "Baseline", ""}};
  for (const auto& [name, card] : cards) out.push_back({ConditionKind::Archetype, name, card});
  validate_conditions(out);
  return out;
}

void validate_conditions(std::span<const Condition> conditions) {
  std::set<std::string> names;
  std::size_t baselines = 0;
  for (const auto& c : conditions) {
    if (!names.insert(c.name).second) throw ConfigError("duplicate condition '" + c.name + "'");
    if (c.kind == ConditionKind::Baseline) {
      ++baselines;
      if (!c.card.empty()) throw ConfigError("baseline condition must not carry a card");
    } else if (text::trim(c.card).empty()) {
      throw ConfigError("archetype condition '" + c.name + "' has no card");
    }
  }
  if (baselines != 1) throw PreconditionError("conditions must include exactly one baseline");
}

std::size_t baseline_index(std::span<const Condition> conditions) {
  for (std::size_t i = 0; i < conditions.size(); ++i)
    if (conditions[i].kind == ConditionKind::Baseline) return i;
  throw PreconditionError("no baseline condition");
}

std::string generation_system_prompt(const std::string& card) {
  return "You are a person with the following characteristics: " + card +
         ". Respond authentically as this person. Do not reference the profile explicitly.";
}

std::size_t GenerationGrid::size() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.has_value(); }));
}

std::size_t RewardGrid::size() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.has_value(); }));
}

namespace {

struct CellOutcome {
  std::optional<std::string> text;
  std::optional<double> score;
  std::string error;
};

}  // namespace

GenerationGrid run_generation_grid(std::span<const Question> questions, std::span<const Condition> conditions,
                                   std::span<providers::CompletionProvider* const> models, const GridOptions& options) {
  if (questions.empty()) throw PreconditionError("at least one question is required");
  if (models.empty()) throw PreconditionError("at least one model is required");
  validate_conditions(conditions);
  GenerationGrid g;
  for (auto* m : models) g.models.push_back(m->model_id());
  g.questions.assign(questions.begin(), questions.end());
  g.conditions.assign(conditions.begin(), conditions.end());
  const std::size_t nq = questions.size(), nc = conditions.size();
  const auto outcomes = providers::parallel_map<CellOutcome>(
      models.size() * nq * nc, options.parallelism, [&](std::size_t i) {
        const std::size_t c = i % nc, q = (i / nc) % nq, m = i / (nc * nq);
        providers::CompletionRequest req;
        req.user_text = questions[q].text;
        req.temperature = options.temperature;
        req.tag = conditions[c].name;
        if (conditions[c].kind == ConditionKind::Archetype) req.system_text = generation_system_prompt(conditions[c].card);
        CellOutcome out;
        try {
          out.text = providers::with_retry(options.retry, [&] { return models[m]->complete(req); });
        } catch (const Error& e) {
          out.error = e.what();
        }
        return out;
      });
  g.cells.resize(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    g.cells[i] = outcomes[i].text;
    if (!outcomes[i].text) {
      const std::size_t c = i % nc, q = (i / nc) % nq, m = i / (nc * nq);
      g.holes.push_back({g.models[m], questions[q].id, conditions[c].name, outcomes[i].error});
    }
  }
  return g;
}

std::vector<SimilarityMatrix> pairwise_similarity(const GenerationGrid& grid, providers::EmbeddingProvider& embedder,
                                                  const GridOptions& options) {
  if (!grid.complete()) throw PreconditionError("similarity needs a complete generation grid");
  const auto vectors = providers::parallel_map<std::vector<double>>(
      grid.cells.size(), options.parallelism,
      [&](std::size_t i) { return providers::with_retry(options.retry, [&] { return embedder.embed(*grid.cells[i]); }); });
  const std::size_t nc = grid.conditions.size();
  std::vector<SimilarityMatrix> out;
  for (std::size_t m = 0; m < grid.models.size(); ++m)
    for (std::size_t q = 0; q < grid.questions.size(); ++q) {
      SimilarityMatrix s{grid.models[m], grid.questions[q].id, grid.questions[q].source,
                         Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(nc), static_cast<Eigen::Index>(nc))};
      for (std::size_t a = 0; a < nc; ++a)
        for (std::size_t b = a + 1; b < nc; ++b) {
          const double v = providers::cosine(vectors[grid.index(m, q, a)], vectors[grid.index(m, q, b)]);
          s.sim(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
          s.sim(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
        }
      out.push_back(std::move(s));
    }
  return out;
}

namespace {

Summary summarize(const std::vector<double>& v) {
  return {ps::mean(v), ps::sample_sd(v), v.size()};
}

double at(const Eigen::MatrixXd& m, std::size_t a, std::size_t b) {
  return m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
}

std::optional<ps::AnovaResult> try_anova(const std::vector<std::vector<double>>& groups, const std::string& what,
                                         std::vector<std::string>& notices) {
  try {
    return ps::oneway_anova(groups);
  } catch (const EstimationError& e) {
    notices.push_back(what + " skipped: " + e.what());
    return std::nullopt;
  }
}

}  // namespace

SensitivityReport sensitivity_report(std::span<const SimilarityMatrix> matrices, std::span<const Condition> conditions) {
  validate_conditions(conditions);
  if (matrices.empty()) throw PreconditionError("no similarity matrices");
  const std::size_t nc = conditions.size(), base = baseline_index(conditions);
  SensitivityReport r;
  for (const auto& c : conditions) r.conditions.push_back(c.name);

  std::vector<std::string> models;
  std::map<std::string, std::vector<const SimilarityMatrix*>> by_model;
  for (const auto& m : matrices) {
    if (m.sim.rows() != static_cast<Eigen::Index>(nc) || m.sim.cols() != static_cast<Eigen::Index>(nc))
      throw PairingError("similarity matrix does not match the condition list");
    if (!by_model.count(m.model)) models.push_back(m.model);
    by_model[m.model].push_back(&m);
  }

  std::vector<double> all_sims;
  std::vector<std::vector<double>> per_model_question_means;
  std::map<std::string, std::vector<double>> pooled_dev;
  std::vector<std::vector<double>> pair_values(nc * nc);
  for (const auto& model : models) {
    std::vector<double> sims, devs, qmeans;
    std::map<std::string, std::vector<double>> model_dev;
    for (const auto* m : by_model[model]) {
      double qsum = 0;
      std::size_t qn = 0;
      for (std::size_t a = 0; a < nc; ++a)
        for (std::size_t b = a + 1; b < nc; ++b) {
          const double v = at(m->sim, a, b);
          sims.push_back(v);
          pair_values[a * nc + b].push_back(v);
          qsum += v;
          ++qn;
        }
      qmeans.push_back(qn ? qsum / static_cast<double>(qn) : 1.0);
      for (std::size_t c = 0; c < nc; ++c) {
        if (c == base) continue;
        const double d = 1.0 - at(m->sim, base, c);
        devs.push_back(d);
        model_dev[conditions[c].name].push_back(d);
        pooled_dev[conditions[c].name].push_back(d);
      }
    }
    all_sims.insert(all_sims.end(), sims.begin(), sims.end());
    per_model_question_means.push_back(qmeans);
    r.models.push_back({model, summarize(sims), ps::mean(devs), ""});
    for (std::size_t c = 0; c < nc; ++c)
      if (c != base) r.deviations.push_back({model, conditions[c].name, summarize(model_dev[conditions[c].name])});
  }

  std::vector<std::size_t> order(r.models.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return r.models[a].similarity.mean < r.models[b].similarity.mean; });
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    auto& m = r.models[order[rank]];
    if (order.size() == 1)
      m.interpretation = "Only model";
    else if (rank == 0)
      m.interpretation = "Most sensitive";
    else if (rank + 1 == order.size())
      m.interpretation = "Least sensitive";
    else
      m.interpretation = "Moderate";
  }

  std::vector<double> all_dev;
  std::vector<std::vector<double>> dev_groups;
  for (std::size_t c = 0; c < nc; ++c) {
    if (c == base) continue;
    const auto& v = pooled_dev[conditions[c].name];
    r.deviations.push_back({"pooled", conditions[c].name, summarize(v)});
    all_dev.insert(all_dev.end(), v.begin(), v.end());
    dev_groups.push_back(v);
  }
  r.overall_deviation = ps::mean(all_dev);

  for (std::size_t a = 0; a < nc; ++a)
    for (std::size_t b = a + 1; b < nc; ++b)
      r.pairs.push_back({conditions[a].name, conditions[b].name, a == base || b == base, summarize(pair_values[a * nc + b])});
  std::stable_sort(r.pairs.begin(), r.pairs.end(),
                   [](const auto& x, const auto& y) { return x.similarity.mean < y.similarity.mean; });

  if (all_sims.size() >= 2) {
    r.identity_test = ps::one_sample_t(all_sims, 1.0);
  } else {
    r.notices.push_back("identity t-test skipped: fewer than 2 similarities");
  }

  if (models.size() < 2) {
    r.notices.push_back("model ANOVA skipped: fewer than 2 models");
  } else {
    r.model_anova = try_anova(per_model_question_means, "model ANOVA", r.notices);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t a = 0; a < models.size(); ++a)
      for (std::size_t b = a + 1; b < models.size(); ++b)
        if (per_model_question_means[a].size() == per_model_question_means[b].size() &&
            per_model_question_means[a].size() >= 2)
          if (auto rr = ps::pearson(per_model_question_means[a], per_model_question_means[b])) {
            sum += *rr;
            ++n;
          }
    if (n) r.cross_model_r = sum / static_cast<double>(n);
    else r.notices.push_back("cross-model consistency undefined: constant per-question similarities");
  }
  if (dev_groups.size() >= 2) r.archetype_anova = try_anova(dev_groups, "archetype ANOVA", r.notices);
  return r;
}

// ---------------------------------------------------------------------------

RewardGrid run_reward_grid(std::span<const Question> questions, std::span<const std::string> reference_responses,
                           std::span<const Condition> conditions, std::span<providers::RewardProvider* const> models,
                           const GridOptions& options) {
  if (questions.empty()) throw PreconditionError("at least one question is required");
  if (reference_responses.size() != questions.size())
    throw PairingError("need exactly one reference response per question");
  if (models.empty()) throw PreconditionError("at least one reward model is required");
  validate_conditions(conditions);
  RewardGrid g;
  for (auto* m : models) g.models.push_back(m->model_id());
  g.questions.assign(questions.begin(), questions.end());
  g.responses.assign(reference_responses.begin(), reference_responses.end());
  g.conditions.assign(conditions.begin(), conditions.end());
  const std::size_t nq = questions.size(), nc = conditions.size();
  const auto outcomes = providers::parallel_map<CellOutcome>(
      models.size() * nq * nc, options.parallelism, [&](std::size_t i) {
        const std::size_t c = i % nc, q = (i / nc) % nq, m = i / (nc * nq);
        std::optional<std::string> prefix;
        if (conditions[c].kind == ConditionKind::Archetype) prefix = conditions[c].card;
        CellOutcome out;
        try {
          out.score = providers::with_retry(options.retry, [&] {
                        return models[m]->score(questions[q].text, reference_responses[q], prefix);
                      }).value;
          if (!std::isfinite(*out.score)) {
            out.score.reset();
            out.error = "non-finite score";
          }
        } catch (const Error& e) {
          out.error = e.what();
        }
        return out;
      });
  g.cells.resize(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    g.cells[i] = outcomes[i].score;
    if (!outcomes[i].score) {
      const std::size_t c = i % nc, q = (i / nc) % nq, m = i / (nc * nq);
      g.holes.push_back({g.models[m], questions[q].id, conditions[c].name, outcomes[i].error});
    }
  }
  return g;
}

const ArchetypeEffect& InvarianceReport::effect(const std::string& model, const std::string& archetype) const {
  for (const auto& e : effects)
    if (e.model == model && e.archetype == archetype) return e;
  throw ConfigError("no effect for (" + model + ", " + archetype + ")");
}

InvarianceReport invariance_report(const RewardGrid& grid, const InvarianceOptions& options) {
  std::size_t base = 0;
  try {
    base = baseline_index(grid.conditions);
  } catch (const PreconditionError&) {
    throw PreconditionError("reward grid has no baseline condition");
  }
  InvarianceReport r;
  r.models = grid.models;
  r.d_method = options.paired ? "paired" : "pooled";
  const std::size_t nq = grid.questions.size(), nc = grid.conditions.size();
  for (std::size_t c = 0; c < nc; ++c)
    if (c != base) r.archetypes.push_back(grid.conditions[c].name);

  for (std::size_t m = 0; m < grid.models.size(); ++m) {
    bool all_pos = true, all_neg = true, all_zero = true;
    for (std::size_t c = 0; c < nc; ++c) {
      if (c == base) continue;
      std::vector<double> t, b;
      for (std::size_t q = 0; q < nq; ++q) {
        const auto& tv = grid.cell(m, q, c);
        const auto& bv = grid.cell(m, q, base);
        if (tv && bv) {
          t.push_back(*tv);
          b.push_back(*bv);
        }
      }
      ArchetypeEffect e{grid.models[m], grid.conditions[c].name, std::nullopt, 0.0, t.size(), b.size()};
      if (t.size() >= 2) {
        e.d = options.paired ? ps::paired_d(t, b) : ps::cohens_d(t, b);
        e.mean_difference = ps::mean(t) - ps::mean(b);
        if (!e.d && e.mean_difference == 0.0) e.d = 0.0;
      } else {
        r.notices.push_back("d undefined for (" + e.model + ", " + e.archetype + "): fewer than 2 paired questions");
      }
      const double d = e.d.value_or(0.0);
      all_pos = all_pos && e.d && d > 0;
      all_neg = all_neg && e.d && d < 0;
      all_zero = all_zero && d == 0.0;
      r.effects.push_back(std::move(e));
    }
    std::string dir = all_zero ? "invariant" : all_pos ? "rewards profiles" : all_neg ? "penalizes profiles" : "mixed";
    r.directions.emplace_back(grid.models[m], dir);

    for (QuestionSource src : {QuestionSource::Opinion, QuestionSource::Dilemma}) {
      std::vector<std::vector<double>> groups(nc);
      std::size_t n = 0;
      for (std::size_t q = 0; q < nq; ++q) {
        if (grid.questions[q].source != src) continue;
        bool full = true;
        for (std::size_t c = 0; c < nc; ++c) full = full && grid.cell(m, q, c).has_value();
        if (!full) continue;
        ++n;
        for (std::size_t c = 0; c < nc; ++c) groups[c].push_back(*grid.cell(m, q, c));
      }
      if (n == 0) continue;
      try {
        r.datasets.push_back({to_string(src), grid.models[m], n, ps::oneway_anova(groups)});
      } catch (const EstimationError& e) {
        r.notices.push_back("ANOVA skipped for (" + to_string(src) + ", " + grid.models[m] + "): " + e.what());
      }
    }
  }

  for (const auto& arch : r.archetypes)
    for (std::size_t a = 0; a < r.models.size(); ++a)
      for (std::size_t b = a + 1; b < r.models.size(); ++b) {
        const auto& ea = r.effect(r.models[a], arch);
        const auto& eb = r.effect(r.models[b], arch);
        if (!ea.d || !eb.d) continue;
        if (*ea.d > 0 && *eb.d < 0) r.disagreements.push_back({arch, ea.model, eb.model, *ea.d, *eb.d});
        if (*ea.d < 0 && *eb.d > 0) r.disagreements.push_back({arch, eb.model, ea.model, *eb.d, *ea.d});
      }
  return r;
}

}  // namespace statetrait::audit
