#pragma once

namespace statetrait::psychometrics {

/// Regularized incomplete beta I_x(a, b). Requires a, b > 0 and x in [0, 1].
double incomplete_beta(double a, double b, double x);

double normal_cdf(double x);

/// CDF of the F distribution with (df1, df2) degrees of freedom.
double f_cdf(double df1, double df2, double x);
/// Upper tail 1 - F_cdf, computed without cancellation.
double f_sf(double df1, double df2, double x);

/// CDF of Student's t distribution with `df` degrees of freedom.
double t_cdf(double df, double x);
/// P(|T| >= |t|).
double t_two_sided_p(double df, double t);

enum class DistKind { F, T };

struct Distribution {
  DistKind kind;
  double df1;
  double df2 = 0.0;  // unused for T

  static Distribution f(double df1, double df2) { return {DistKind::F, df1, df2}; }
  static Distribution t(double df) { return {DistKind::T, df, 0.0}; }
};

/// Throws DomainError for non-positive or non-finite degrees of freedom, or non-finite x.
double dist_cdf(const Distribution& dist, double x);

}  // namespace statetrait::psychometrics
