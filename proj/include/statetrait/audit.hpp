#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "statetrait/providers.hpp"
#include "statetrait/psychometrics.hpp"

namespace statetrait::audit {

enum class QuestionSource { Opinion, Dilemma };
std::string to_string(QuestionSource s);

struct Question {
  std::string id;
  std::string text;
  QuestionSource source = QuestionSource::Opinion;
  std::string category;
};

/// JSONL with id, text, source (opinion|dilemma), optional category.
std::vector<Question> parse_questions(std::string_view jsonl);
std::vector<Question> load_questions_file(const std::string& path);
std::vector<Question> bundled_dilemmas();
std::vector<Question> bundled_opinion_examples();

enum class ConditionKind { Baseline, Archetype };

struct Condition {
  ConditionKind kind = ConditionKind::Baseline;
  std::string name;
  std::string card;  ///< empty for the baseline
};

/// Baseline first, then one archetype condition per (name, card).
std::vector<Condition> make_conditions(const std::vector<std::pair<std::string, std::string>>& cards);
/// Exactly one baseline; cards present iff archetype; unique names.
void validate_conditions(std::span<const Condition> conditions);
std::size_t baseline_index(std::span<const Condition> conditions);

std::string generation_system_prompt(const std::string& card);

struct Hole {
  std::string model;
  std::string question_id;
  std::string condition;
  std::string error;
};

struct GridOptions {
  std::size_t parallelism = 1;
  providers::RetryPolicy retry;
  double temperature = 0.0;
};

struct GenerationGrid {
  std::vector<std::string> models;
  std::vector<Question> questions;
  std::vector<Condition> conditions;
  std::vector<std::optional<std::string>> cells;  ///< [model][question][condition]
  std::vector<Hole> holes;

  std::size_t index(std::size_t m, std::size_t q, std::size_t c) const {
    return (m * questions.size() + q) * conditions.size() + c;
  }
  const std::optional<std::string>& cell(std::size_t m, std::size_t q, std::size_t c) const { return cells[index(m, q, c)]; }
  bool complete() const { return holes.empty(); }
  std::size_t size() const;  ///< filled cells
};

GenerationGrid run_generation_grid(std::span<const Question> questions, std::span<const Condition> conditions,
                                   std::span<providers::CompletionProvider* const> models,
                                   const GridOptions& options = {});

struct SimilarityMatrix {
  std::string model;
  std::string question_id;
  QuestionSource source = QuestionSource::Opinion;
  Eigen::MatrixXd sim;  ///< conditions x conditions
};

std::vector<SimilarityMatrix> pairwise_similarity(const GenerationGrid& grid, providers::EmbeddingProvider& embedder,
                                                  const GridOptions& options = {});

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

struct ModelSensitivity {
  std::string model;
  Summary similarity;  ///< off-diagonal similarities
  double baseline_deviation = 0.0;
  std::string interpretation;
};

struct ArchetypeDeviation {
  std::string scope;  ///< "pooled" or a model id
  std::string archetype;
  Summary deviation;  ///< 1 - sim(baseline, archetype)
};

struct ConditionPair {
  std::string a;
  std::string b;
  bool involves_baseline = false;
  Summary similarity;
};

struct SensitivityReport {
  std::vector<std::string> conditions;
  std::vector<ModelSensitivity> models;
  std::vector<ArchetypeDeviation> deviations;
  double overall_deviation = 0.0;
  std::vector<ConditionPair> pairs;  ///< ascending mean similarity
  psychometrics::TTestResult identity_test;
  std::optional<psychometrics::AnovaResult> model_anova;
  std::optional<psychometrics::AnovaResult> archetype_anova;
  std::optional<double> cross_model_r;
  std::vector<std::string> notices;
};

SensitivityReport sensitivity_report(std::span<const SimilarityMatrix> matrices, std::span<const Condition> conditions);

struct RewardGrid {
  std::vector<std::string> models;
  std::vector<Question> questions;
  std::vector<std::string> responses;  ///< one reference response per question
  std::vector<Condition> conditions;
  std::vector<std::optional<double>> cells;  ///< [model][question][condition]
  std::vector<Hole> holes;

  std::size_t index(std::size_t m, std::size_t q, std::size_t c) const {
    return (m * questions.size() + q) * conditions.size() + c;
  }
  const std::optional<double>& cell(std::size_t m, std::size_t q, std::size_t c) const { return cells[index(m, q, c)]; }
  bool complete() const { return holes.empty(); }
  std::size_t size() const;
};

RewardGrid run_reward_grid(std::span<const Question> questions, std::span<const std::string> reference_responses,
                           std::span<const Condition> conditions, std::span<providers::RewardProvider* const> models,
                           const GridOptions& options = {});

struct ArchetypeEffect {
  std::string model;
  std::string archetype;
  std::optional<double> d;
  double mean_difference = 0.0;
  std::size_t n_treatment = 0;
  std::size_t n_baseline = 0;
};

struct DatasetEffect {
  std::string source;
  std::string model;
  std::size_t n_questions = 0;
  psychometrics::AnovaResult anova;
};

struct Disagreement {
  std::string archetype;
  std::string model_positive;
  std::string model_negative;
  double d_positive = 0.0;
  double d_negative = 0.0;
};

struct InvarianceReport {
  std::vector<std::string> models;
  std::vector<std::string> archetypes;
  std::string d_method;  ///< "pooled" or "paired"
  std::vector<ArchetypeEffect> effects;  ///< model-major
  std::vector<DatasetEffect> datasets;
  std::vector<std::pair<std::string, std::string>> directions;  ///< (model, direction)
  std::vector<Disagreement> disagreements;
  std::vector<std::string> notices;

  const ArchetypeEffect& effect(const std::string& model, const std::string& archetype) const;
};

struct InvarianceOptions {
  bool paired = false;
};

InvarianceReport invariance_report(const RewardGrid& grid, const InvarianceOptions& options = {});

}  // namespace statetrait::audit
