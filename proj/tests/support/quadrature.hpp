#pragma once

// Test-only numeric integration oracle for the F and t CDFs. Deliberately
// independent of the incomplete-beta code it checks.

#include <cmath>
#include <functional>

namespace statetrait::testing {

namespace detail {

// 15-point Gauss-Kronrod with 7-point Gauss error estimate.
inline double gk15(const std::function<double(double)>& f, double a, double b, double& err) {
  static constexpr double xk[8] = {0.991455371120812639, 0.949107912342758525, 0.864864423359769073,
                                   0.741531185599394440, 0.586087235467691130, 0.405845151377397167,
                                   0.207784955007898468, 0.000000000000000000};
  static constexpr double wk[8] = {0.022935322010529225, 0.063092092629978553, 0.104790010322250184,
                                   0.140653259715525919, 0.169004726639267903, 0.190350578064785410,
                                   0.204432940075298892, 0.209482141084727828};
  static constexpr double wg[4] = {0.129484966168869693, 0.279705391489276668, 0.381830050505118945,
                                   0.417959183673469388};
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double k = fc * wk[7];
  double g = fc * wg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * xk[j];
    const double s = f(c - dx) + f(c + dx);
    k += wk[j] * s;
    if (j % 2 == 1) g += wg[j / 2] * s;
  }
  err = std::fabs((k - g) * h);
  return k * h;
}

inline double adaptive(const std::function<double(double)>& f, double a, double b, double tol, int depth) {
  double err = 0.0;
  const double whole = gk15(f, a, b, err);
  if (err <= tol || depth <= 0) return whole;
  const double m = 0.5 * (a + b);
  return adaptive(f, a, m, tol / 2, depth - 1) + adaptive(f, m, b, tol / 2, depth - 1);
}

}  // namespace detail

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-14) {
  return detail::adaptive(f, a, b, tol, 40);
}

/// P(X <= x) for X ~ F(d1, d2), by integrating the density after x = u^2.
inline double f_cdf_quadrature(double d1, double d2, double x) {
  if (x <= 0) return 0.0;
  const double log_c = std::lgamma((d1 + d2) / 2) - std::lgamma(d1 / 2) - std::lgamma(d2 / 2) +
                       (d1 / 2) * std::log(d1 / d2);
  auto integrand = [&](double u) {
    if (u <= 0) return d1 == 1.0 ? 2.0 * std::exp(log_c) : 0.0;
    const double v = u * u;
    return 2.0 * std::exp(log_c + (d1 - 1.0) * std::log(u) - ((d1 + d2) / 2) * std::log1p(d1 * v / d2));
  };
  return integrate(integrand, 0.0, std::sqrt(x));
}

/// P(T <= x) for T ~ t(nu).
inline double t_cdf_quadrature(double nu, double x) {
  const double log_c = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * M_PI);
  auto pdf = [&](double t) { return std::exp(log_c - ((nu + 1) / 2) * std::log1p(t * t / nu)); };
  const double half = integrate(pdf, 0.0, std::fabs(x));
  return x >= 0 ? 0.5 + half : 0.5 - half;
}

}  // namespace statetrait::testing
