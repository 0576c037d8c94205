#include "statetrait/distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "statetrait/error.hpp"

namespace statetrait::psychometrics {
namespace {

constexpr double kTiny = 1e-300;
constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 10000;

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

void require_df(double df) {
  if (!(df > 0.0) || !std::isfinite(df)) throw DomainError("degrees of freedom must be positive and finite");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete_beta: shape parameters must be positive");
  if (std::isnan(x) || x < 0.0 || x > 1.0) throw DomainError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double f_cdf(double df1, double df2, double x) {
  require_df(df1);
  require_df(df2);
  if (std::isnan(x)) throw DomainError("f_cdf: x is NaN");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  // Use whichever argument avoids loss of precision near 1.
  const double u = df1 * x;
  if (u <= df2) return incomplete_beta(df1 / 2.0, df2 / 2.0, u / (u + df2));
  return 1.0 - incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + u));
}

double f_sf(double df1, double df2, double x) {
  require_df(df1);
  require_df(df2);
  if (std::isnan(x)) throw DomainError("f_sf: x is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double u = df1 * x;
  if (u >= df2) return incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + u));
  return 1.0 - incomplete_beta(df1 / 2.0, df2 / 2.0, u / (u + df2));
}

double t_cdf(double df, double x) {
  require_df(df);
  if (std::isnan(x)) throw DomainError("t_cdf: x is NaN");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * t_two_sided_p(df, x);
  return x >= 0.0 ? 1.0 - tail : tail;
}

double t_two_sided_p(double df, double t) {
  require_df(df);
  if (std::isnan(t)) throw DomainError("t_two_sided_p: t is NaN");
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  if (t2 == 0.0) return 1.0;
  // For small t, the complementary form keeps precision.
  if (t2 < df) return 1.0 - incomplete_beta(0.5, df / 2.0, t2 / (df + t2));
  return incomplete_beta(df / 2.0, 0.5, df / (df + t2));
}

double dist_cdf(const Distribution& dist, double x) {
  if (!std::isfinite(x)) throw DomainError("dist_cdf: x must be finite");
  switch (dist.kind) {
    case DistKind::F:
      return f_cdf(dist.df1, dist.df2, x);
    case DistKind::T:
      return t_cdf(dist.df1, x);
  }
  throw DomainError("dist_cdf: unknown distribution");
}

}  // namespace statetrait::psychometrics
