#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "statetrait/corpus.hpp"
#include "statetrait/providers.hpp"
#include "statetrait/report.hpp"

namespace statetrait::pipeline {

std::string version();

enum class Stage { Ingest, Extract, Assess, Fuse, Decompose, Validate, Archetypes, AuditGen, AuditReward, Report, All };

Stage parse_stage(std::string_view name);
std::string to_string(Stage s);
/// Execution order of the concrete stages (everything except All).
const std::vector<Stage>& stage_order();

/// One provider slot. kind "mock" or "http".
struct ProviderConfig {
  std::string kind = "mock";
  std::string model;
  std::string base_url;
  std::string credential_env = providers::kDefaultCredentialEnv;
  int timeout_seconds = 60;
  std::optional<std::uint64_t> seed;  ///< mocks only; derived from the run seed when absent
  double delta = 0.0;                 ///< reward mocks: bonus when a profile is present
  double card_scale = 0.0;            ///< reward mocks: card-dependent bonus
};

struct Hypothesis {
  std::string id;
  std::string context;
  std::string dimension;
  int expected_sign = 1;
};

struct RunConfig {
  std::filesystem::path base_dir;  ///< relative paths resolve against this
  std::uint64_t seed = 0;

  std::filesystem::path corpus_path;
  corpus::Format corpus_format = corpus::Format::Jsonl;
  std::size_t min_words = 50;
  std::size_t min_contexts = 3;
  std::size_t posts_per_user = 3;

  std::optional<std::filesystem::path> registry_path;
  std::optional<std::filesystem::path> thresholds_path;
  std::vector<std::filesystem::path> lexicon_paths;  ///< empty: bundled demo lexicon

  std::optional<int> k = 6;  ///< nullopt: pick by silhouette over k_range
  std::vector<int> k_range{2, 3, 4, 5, 6, 7, 8};
  int kmeans_restarts = 10;
  std::vector<std::string> archetype_labels;  ///< empty: defaults when k == 6

  std::optional<std::filesystem::path> dilemmas_path;  ///< empty: bundled 50 dilemmas
  std::optional<std::filesystem::path> opinions_path;  ///< empty: bundled examples

  ProviderConfig extraction;
  ProviderConfig assessment;
  ProviderConfig embedding;
  std::size_t embedding_dimension = providers::kDefaultEmbeddingDim;
  std::vector<ProviderConfig> generation;
  std::vector<ProviderConfig> reward;

  std::size_t parallelism = 1;
  int max_attempts = 3;
  std::string baseline_context = "AskReddit";
  std::vector<Hypothesis> hypotheses;
  std::size_t heatmap_min_posts = 10;
  bool paired_d = false;
  std::vector<report::Format> report_formats{report::Format::Csv, report::Format::Json, report::Format::SvgHeatmap};
  std::filesystem::path output_dir = "out";

  /// Settings that influence artifacts, as canonical JSON (no paths to outputs, no parallelism).
  nlohmann::json fingerprint() const;
};

/// The five context hypotheses tested against the baseline context.
std::vector<Hypothesis> default_hypotheses();

/// Parses and validates. Throws ConfigError on bad keys, values or missing files.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  bool force_mock = false;
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::size_t> parallelism;
  std::ostream* log = nullptr;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitPartial = 2;

struct StageResult {
  Stage stage = Stage::Ingest;
  int exit_code = kExitOk;
  std::vector<std::string> outputs;  ///< relative to the output directory
  std::vector<std::string> notices;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<StageResult> stages;
  std::string error;  ///< set when exit_code == kExitError
};

/// Runs one stage (or all of them in order). Library errors are caught and
/// reported as exit code 1; a grid with holes gives 2.
RunResult run(Stage stage, RunConfig config, const RunOptions& options = {});

}  // namespace statetrait::pipeline
