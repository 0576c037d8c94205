#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "statetrait/scales.hpp"

namespace statetrait::archetypes {

inline const std::vector<std::string> kDefaultLabels = {
    "Distressed-Vulnerable",   "Driven-Assertive",        "Self-Actualized",
    "Supportive-Conventional", "Nonconformist-Skeptical", "Risk-Seeking-Detached"};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  std::size_t parallelism = 1;
};

struct ArchetypeModel {
  int k = 0;
  Eigen::MatrixXd centroids;  ///< k x d
  std::vector<std::string> labels;
  std::uint64_t seed = 0;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  ///< best restart, one entry per assignment step
  std::vector<int> assignments;       ///< per input row
  int iterations = 0;
  bool converged = false;
  int reseeded_clusters = 0;
};

/// Lloyd's algorithm with k-means++ seeding; best restart by inertia (ties to the
/// lowest restart index). Empty clusters are re-seeded from the farthest point.
ArchetypeModel kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Labels default to kDefaultLabels when k <= 6, else "Archetype-<i>".
void set_labels(ArchetypeModel& model, std::vector<std::string> labels);

/// Per-row silhouette (Euclidean). Singletons score 0; 0/0 is taken as 0.
std::vector<double> silhouette_samples(const Eigen::MatrixXd& x, std::span<const int> labels);
double silhouette(const Eigen::MatrixXd& x, std::span<const int> labels);

struct KSelection {
  int best_k = 0;
  std::vector<std::pair<int, double>> silhouettes;
};

/// Mean silhouette per k; the largest wins, ties to the smaller k.
KSelection select_k(const Eigen::MatrixXd& x, std::span<const int> k_range, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Nearest centroid; ties to the lowest index.
int assign(const Eigen::VectorXd& profile, const ArchetypeModel& model);

/// Row nearest to a centroid; ties to the lowest row.
std::size_t nearest_exemplar(const Eigen::VectorXd& centroid, const Eigen::MatrixXd& x);

struct DiversityStats {
  std::size_t n_users = 0;
  double frac_one = 0.0;
  double frac_two = 0.0;
  double frac_three_plus = 0.0;
  double frac_at_least_two = 0.0;
};

DiversityStats diversity_stats(const std::map<std::string, std::vector<int>>& assignments_by_user);

// ---------------------------------------------------------------------------
// Profile cards

struct ThresholdBand {
  enum class Basis { Raw, Z } basis = Basis::Z;
  std::string op;  ///< ">=", "<=", ">", "<"
  double cutoff = 0.0;
  std::string descriptor;
};

struct DimensionThresholds {
  std::vector<ThresholdBand> bands;  ///< first match wins
  std::string fallback;
};

struct Thresholds {
  std::vector<std::pair<double, std::string>> magnitude_bands;  ///< descending |z| cutoffs
  std::string magnitude_default = "negligible";
  std::map<std::string, DimensionThresholds> dimensions;

  std::string describe(const std::string& dimension, double raw, double z) const;
  std::string magnitude(double z) const;
};

Thresholds load_thresholds(const nlohmann::json& doc);
Thresholds load_thresholds_file(const std::string& path);
Thresholds default_thresholds();

/// Population mean and SD per dimension, used to map z back to raw units.
struct PopulationStats {
  std::vector<std::string> dimensions;
  std::vector<double> mean;
  std::vector<double> sd;
};

struct CardScore {
  std::string dimension;
  double z = 0.0;
  double raw = 0.0;
  bool clamped = false;
  std::string descriptor;
  std::string magnitude;
};

struct ProfileCard {
  std::string label;
  std::vector<CardScore> scores;  ///< registry order
  std::vector<std::string> top_values;
  std::string values_summary;
  std::string primary_drive;
  std::string emotional_expression;
  std::string communication_style;
  std::string decision_advice;
  std::string personality_scale;
  std::string values_scale;
  std::string motivation_scale;
  std::string risk_scale;

  const CardScore& score(const std::string& dimension) const;
  /// Text layout: personality, values, motivation, risk, behavioral guidance.
  std::string text() const;
};

ProfileCard render_profile_card(const Eigen::VectorXd& z, const PopulationStats& stats,
                                const scales::ScaleRegistry& registry, const Thresholds& thresholds,
                                std::string label = {});

}  // namespace statetrait::archetypes
