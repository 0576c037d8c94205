#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "statetrait/distributions.hpp"

namespace statetrait::psychometrics {

/// ICC below this marks a dimension as state-dominant.
inline constexpr double kStateDominantThreshold = 0.30;

// ---------------------------------------------------------------------------
// Intraclass correlation

struct IccResult {
  double icc = 0.0;          ///< clamped to [0, 1]
  double var_between = 0.0;  ///< max(0, (MSB - MSW) / k0)
  double var_within = 0.0;   ///< MSW
  double msb = 0.0;
  double msw = 0.0;
  double k0 = 0.0;           ///< effective group size for unbalanced designs
  std::size_t n_groups = 0;
  std::size_t n_obs = 0;
  bool clamped = false;      ///< raw estimate fell outside [0, 1]
  bool degenerate = false;   ///< no variance at all; icc reported as 0
};

/// One-way random-effects ICC (ANOVA estimator), observations nested in groups.
/// Requires >= 2 groups and at least 2 more observations than groups.
IccResult icc_oneway(std::span<const std::vector<double>> groups);

/// Same estimator with observations labelled by group.
IccResult icc_oneway(std::span<const double> values, std::span<const std::string> group_labels);

struct DimensionDecomposition {
  std::string dimension;
  double icc = 0.0;
  double ospe = 1.0;  ///< occasion specificity, 1 - icc
  double var_between = 0.0;
  double var_within = 0.0;
  bool clamped = false;
};

struct VarianceDecomposition {
  std::string method;
  std::vector<DimensionDecomposition> dimensions;
  double threshold = kStateDominantThreshold;
  double mean_icc = 0.0;
  double min_icc = 0.0;
  double max_icc = 0.0;
  double mean_ospe = 0.0;
  std::size_t n_below_threshold = 0;
};

/// Profiles for one method: rows are posts, columns are dimensions.
struct MethodProfiles {
  std::string method;
  std::vector<std::string> dimensions;
  Eigen::MatrixXd values;
  std::vector<std::string> user_ids;  ///< one per row
};

VarianceDecomposition decompose(const MethodProfiles& profiles,
                                double threshold = kStateDominantThreshold);

std::vector<VarianceDecomposition> decompose_all(std::span<const MethodProfiles> methods,
                                                 double threshold = kStateDominantThreshold);

// ---------------------------------------------------------------------------
// Correlation

/// Sample Pearson correlation. nullopt when either input is constant.
/// Throws PairingError on unequal lengths and EstimationError when n < 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct MtmmResult {
  /// (i, j) = r(lex column i, sem column j); NaN where undefined.
  Eigen::MatrixXd r;
  double diagonal_mean = 0.0;
  double diagonal_min = 0.0;
  double diagonal_max = 0.0;
  double off_diagonal_mean_abs = 0.0;
  std::size_t diagonal_defined = 0;
};

/// Multi-trait multi-method matrix between two row-aligned profile matrices.
MtmmResult mtmm_matrix(const Eigen::MatrixXd& lex, const Eigen::MatrixXd& sem);
MtmmResult mtmm_matrix(const Eigen::MatrixXd& lex, std::span<const std::string> lex_ids,
                       const Eigen::MatrixXd& sem, std::span<const std::string> sem_ids);

// ---------------------------------------------------------------------------
// Random-intercept linear mixed model

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;   ///< Wald, estimate - 1.96 SE
  double ci_high = 0.0;  ///< Wald, estimate + 1.96 SE
  double p_value = 1.0;  ///< normal approximation, two-sided
};

struct MixedModelOptions {
  double ratio_min = 1e-8;  ///< bracket for sigma_u^2 / sigma_e^2
  double ratio_max = 1e8;
  double tolerance = 1e-10;  ///< on log(ratio)
  int max_iterations = 500;
  int grid_points = 81;
  /// Skip the search and fit at this ratio (0 gives ordinary least squares).
  std::optional<double> fixed_ratio;
};

struct MixedModelFit {
  std::vector<Coefficient> beta;  ///< "(Intercept)" first, then contexts in sorted order
  double sigma_u2 = 0.0;
  double sigma_e2 = 0.0;
  double variance_ratio = 0.0;
  double reml_loglik = 0.0;
  bool converged = false;
  bool at_boundary = false;
  int iterations = 0;
  std::size_t n_obs = 0;
  std::size_t n_groups = 0;
  std::string diagnostics;

  const Coefficient* find(const std::string& name) const;
};

/// y = b0 + sum_c b_c 1[c] + u_user + e, u ~ N(0, sigma_u^2), fitted by REML.
/// The variance ratio is found by a bounded search over log(ratio); fixed effects
/// by GLS at the optimum.
MixedModelFit fit_random_intercept(std::span<const double> outcome,
                                   std::span<const std::string> context_labels,
                                   std::span<const std::string> user_labels,
                                   const std::string& baseline_context,
                                   const MixedModelOptions& options = {});

// ---------------------------------------------------------------------------
// Group comparisons

struct AnovaResult {
  double f = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
  double p = 1.0;
  double eta_squared = 0.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  bool infinite_f = false;  ///< MSW = 0 with SSB > 0: f = +inf, p = 0
  bool degenerate = false;  ///< no variance anywhere: f and p are NaN
};

AnovaResult oneway_anova(std::span<const std::vector<double>> groups);

/// Pooled-SD standardized mean difference. nullopt when the pooled SD is 0.
std::optional<double> cohens_d(std::span<const double> treatment, std::span<const double> baseline);

/// Mean of pairwise differences over their SD. nullopt when that SD is 0
/// (relative to the input magnitude).
std::optional<double> paired_d(std::span<const double> treatment, std::span<const double> baseline);

struct EffectSize {
  std::optional<double> cohens_d;
  std::optional<double> eta_squared;
  std::size_t n_treatment = 0;
  std::size_t n_baseline = 0;
};

struct TTestResult {
  std::optional<double> t;  ///< nullopt when the sample SD is 0
  double df = 0.0;
  std::optional<double> p;
  double mean = 0.0;
  double sd = 0.0;
};

TTestResult one_sample_t(std::span<const double> values, double null_mean);

// ---------------------------------------------------------------------------
// Small helpers shared by reports

double mean(std::span<const double> v);
/// Sample SD (n - 1). Returns 0 for fewer than two values.
double sample_sd(std::span<const double> v);

}  // namespace statetrait::psychometrics
