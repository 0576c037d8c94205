#include "statetrait/psychometrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include <Eigen/Cholesky>

#include "statetrait/error.hpp"

namespace statetrait::psychometrics {

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// ICC

IccResult icc_oneway(std::span<const std::vector<double>> groups) {
  IccResult out;
  out.n_groups = groups.size();
  if (groups.size() < 2) throw EstimationError("icc_oneway: at least 2 groups are required");
  double total = 0.0;
  double sum_sq_sizes = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw EstimationError("icc_oneway: empty group");
    out.n_obs += g.size();
    total += std::accumulate(g.begin(), g.end(), 0.0);
    sum_sq_sizes += static_cast<double>(g.size()) * static_cast<double>(g.size());
  }
  const double n = static_cast<double>(out.n_obs);
  const double n_groups = static_cast<double>(out.n_groups);
  if (out.n_obs < out.n_groups + 2)
    throw EstimationError("icc_oneway: need at least 2 more observations than groups");

  const double grand = total / n;
  double ssb = 0.0, ssw = 0.0;
  for (const auto& g : groups) {
    const double m = mean(g);
    ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) ssw += (x - m) * (x - m);
  }
  out.msb = ssb / (n_groups - 1.0);
  out.msw = ssw / (n - n_groups);
  out.k0 = (n - sum_sq_sizes / n) / (n_groups - 1.0);

  const double denom = out.msb + (out.k0 - 1.0) * out.msw;
  double icc = 0.0;
  if (denom <= 0.0) {
    out.degenerate = true;
  } else {
    icc = (out.msb - out.msw) / denom;
  }
  if (icc < 0.0 || icc > 1.0) {
    out.clamped = true;
    icc = std::clamp(icc, 0.0, 1.0);
  }
  out.icc = icc;
  out.var_between = std::max(0.0, (out.msb - out.msw) / out.k0);
  out.var_within = out.msw;
  return out;
}

IccResult icc_oneway(std::span<const double> values, std::span<const std::string> group_labels) {
  if (values.size() != group_labels.size())
    throw PairingError("icc_oneway: values and labels differ in length");
  std::vector<std::vector<double>> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [it, inserted] = index.try_emplace(group_labels[i], groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(values[i]);
  }
  return icc_oneway(groups);
}

VarianceDecomposition decompose(const MethodProfiles& profiles, double threshold) {
  const auto rows = static_cast<std::size_t>(profiles.values.rows());
  const auto cols = static_cast<std::size_t>(profiles.values.cols());
  if (profiles.user_ids.size() != rows)
    throw PairingError("decompose: one user id per profile row is required");
  if (profiles.dimensions.size() != cols)
    throw PairingError("decompose: dimension names do not match matrix columns");

  VarianceDecomposition out;
  out.method = profiles.method;
  out.threshold = threshold;
  std::vector<double> column(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) column[i] = profiles.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    const IccResult icc = icc_oneway(column, profiles.user_ids);
    out.dimensions.push_back({profiles.dimensions[j], icc.icc, 1.0 - icc.icc, icc.var_between,
                              icc.var_within, icc.clamped});
  }
  if (!out.dimensions.empty()) {
    std::vector<double> iccs;
    for (const auto& d : out.dimensions) {
      iccs.push_back(d.icc);
      if (d.icc < threshold) ++out.n_below_threshold;
    }
    out.mean_icc = mean(iccs);
    out.min_icc = *std::min_element(iccs.begin(), iccs.end());
    out.max_icc = *std::max_element(iccs.begin(), iccs.end());
    out.mean_ospe = 1.0 - out.mean_icc;
  }
  return out;
}

std::vector<VarianceDecomposition> decompose_all(std::span<const MethodProfiles> methods,
                                                 double threshold) {
  std::vector<VarianceDecomposition> out;
  out.reserve(methods.size());
  for (const auto& m : methods) out.push_back(decompose(m, threshold));
  return out;
}

// ---------------------------------------------------------------------------
// Correlation

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw PairingError("pearson: inputs differ in length");
  if (x.size() < 2) throw EstimationError("pearson: at least 2 observations are required");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MtmmResult mtmm_matrix(const Eigen::MatrixXd& lex, const Eigen::MatrixXd& sem) {
  if (lex.rows() != sem.rows() || lex.cols() != sem.cols())
    throw PairingError("mtmm_matrix: lex and sem matrices are not aligned");
  const Eigen::Index d = lex.cols();
  MtmmResult out;
  out.r = Eigen::MatrixXd::Constant(d, d, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::vector<double>> lex_cols(static_cast<std::size_t>(d)), sem_cols(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    lex_cols[static_cast<std::size_t>(j)].assign(lex.col(j).data(), lex.col(j).data() + lex.rows());
    sem_cols[static_cast<std::size_t>(j)].assign(sem.col(j).data(), sem.col(j).data() + sem.rows());
  }
  std::vector<double> diag;
  double off_sum = 0.0;
  std::size_t off_n = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto r = pearson(lex_cols[static_cast<std::size_t>(i)], sem_cols[static_cast<std::size_t>(j)]);
      if (!r) continue;
      out.r(i, j) = *r;
      if (i == j) {
        diag.push_back(*r);
      } else {
        off_sum += std::fabs(*r);
        ++off_n;
      }
    }
  }
  out.diagonal_defined = diag.size();
  if (!diag.empty()) {
    out.diagonal_mean = mean(diag);
    out.diagonal_min = *std::min_element(diag.begin(), diag.end());
    out.diagonal_max = *std::max_element(diag.begin(), diag.end());
  }
  if (off_n) out.off_diagonal_mean_abs = off_sum / static_cast<double>(off_n);
  return out;
}

MtmmResult mtmm_matrix(const Eigen::MatrixXd& lex, std::span<const std::string> lex_ids,
                       const Eigen::MatrixXd& sem, std::span<const std::string> sem_ids) {
  if (!std::equal(lex_ids.begin(), lex_ids.end(), sem_ids.begin(), sem_ids.end()))
    throw PairingError("mtmm_matrix: row ids differ between methods");
  return mtmm_matrix(lex, sem);
}

// ---------------------------------------------------------------------------
// Mixed model

const Coefficient* MixedModelFit::find(const std::string& name) const {
  for (const auto& c : beta)
    if (c.name == name) return &c;
  return nullptr;
}

namespace {

// Sufficient statistics of a one-hot context design with an intercept.
struct RandomInterceptDesign {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::string> names;
  std::vector<int> row_col;                   // design column of each row, -1 for baseline
  std::vector<std::size_t> row_group;
  std::vector<double> group_size;
  std::vector<std::map<std::size_t, double>> group_cols;  // sparse X_u^T 1
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  std::vector<double> group_y;  // sum of y per group
  std::span<const double> y;
};

struct RemlEval {
  double loglik = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;
  Eigen::MatrixXd a_inv;
  double sigma_e2 = 0.0;
};

RemlEval evaluate(const RandomInterceptDesign& d, double ratio, bool want_cov) {
  RemlEval ev;
  const auto p = static_cast<Eigen::Index>(d.p);
  Eigen::MatrixXd a = d.xtx;
  Eigen::VectorXd b = d.xty;
  double logdet_h = 0.0;
  std::vector<double> w(d.group_size.size());
  for (std::size_t g = 0; g < d.group_size.size(); ++g) {
    w[g] = ratio / (1.0 + ratio * d.group_size[g]);
    logdet_h += std::log1p(ratio * d.group_size[g]);
    for (const auto& [ci, vi] : d.group_cols[g]) {
      b(static_cast<Eigen::Index>(ci)) -= w[g] * d.group_y[g] * vi;
      for (const auto& [cj, vj] : d.group_cols[g])
        a(static_cast<Eigen::Index>(ci), static_cast<Eigen::Index>(cj)) -= w[g] * vi * vj;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return ev;
  ev.beta = llt.solve(b);

  std::vector<double> group_resid(d.group_size.size(), 0.0);
  double rss = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    double fit = ev.beta(0);
    if (d.row_col[i] >= 0) fit += ev.beta(d.row_col[i]);
    const double r = d.y[i] - fit;
    rss += r * r;
    group_resid[d.row_group[i]] += r;
  }
  double quad = rss;
  for (std::size_t g = 0; g < w.size(); ++g) quad -= w[g] * group_resid[g] * group_resid[g];
  const double dof = static_cast<double>(d.n - d.p);
  if (!(quad > 0.0)) return ev;

  double logdet_a = 0.0;
  const Eigen::MatrixXd& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < p; ++i) logdet_a += 2.0 * std::log(l(i, i));

  ev.sigma_e2 = quad / dof;
  ev.loglik = -0.5 * (dof * std::log(ev.sigma_e2) + logdet_h + logdet_a +
                      dof * (1.0 + std::log(2.0 * std::numbers::pi)));
  if (want_cov) ev.a_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  return ev;
}

}  // namespace

MixedModelFit fit_random_intercept(std::span<const double> outcome,
                                   std::span<const std::string> context_labels,
                                   std::span<const std::string> user_labels,
                                   const std::string& baseline_context,
                                   const MixedModelOptions& options) {
  const std::size_t n = outcome.size();
  if (context_labels.size() != n || user_labels.size() != n)
    throw PairingError("fit_random_intercept: outcome, context and user vectors differ in length");
  if (std::find(context_labels.begin(), context_labels.end(), baseline_context) == context_labels.end())
    throw PreconditionError("fit_random_intercept: baseline context '" + baseline_context +
                            "' has no observations");
  for (double v : outcome)
    if (!std::isfinite(v)) throw PreconditionError("fit_random_intercept: non-finite outcome");

  RandomInterceptDesign d;
  d.n = n;
  d.y = outcome;
  std::map<std::string, std::size_t> level_count;
  for (const auto& c : context_labels) ++level_count[c];
  d.names.push_back("(Intercept)");
  std::map<std::string, int> level_col;
  for (const auto& [level, count] : level_count) {
    if (level == baseline_context) continue;
    if (count == 0) throw DesignError("fit_random_intercept: empty context level '" + level + "'");
    level_col[level] = static_cast<int>(d.names.size());
    d.names.push_back(level);
  }
  d.p = d.names.size();
  if (n <= d.p) throw DesignError("fit_random_intercept: more parameters than observations");

  const auto p = static_cast<Eigen::Index>(d.p);
  d.xtx = Eigen::MatrixXd::Zero(p, p);
  d.xty = Eigen::VectorXd::Zero(p);
  std::unordered_map<std::string, std::size_t> group_index;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = group_index.try_emplace(user_labels[i], d.group_size.size());
    if (inserted) {
      d.group_size.push_back(0.0);
      d.group_cols.emplace_back();
      d.group_y.push_back(0.0);
    }
    const std::size_t g = it->second;
    const auto lc = level_col.find(context_labels[i]);
    const int col = lc == level_col.end() ? -1 : lc->second;
    d.row_col.push_back(col);
    d.row_group.push_back(g);
    d.group_size[g] += 1.0;
    d.group_y[g] += outcome[i];
    d.group_cols[g][0] += 1.0;
    d.xtx(0, 0) += 1.0;
    d.xty(0) += outcome[i];
    if (col >= 0) {
      d.group_cols[g][static_cast<std::size_t>(col)] += 1.0;
      d.xtx(0, col) += 1.0;
      d.xtx(col, 0) += 1.0;
      d.xtx(col, col) += 1.0;
      d.xty(col) += outcome[i];
    }
  }
  {
    Eigen::LLT<Eigen::MatrixXd> check(d.xtx);
    if (check.info() != Eigen::Success) throw DesignError("fit_random_intercept: singular design");
  }

  MixedModelFit fit;
  fit.n_obs = n;
  fit.n_groups = d.group_size.size();

  const bool identifiable =
      std::any_of(d.group_size.begin(), d.group_size.end(), [](double s) { return s > 1.0; });

  double ratio = 0.0;
  if (options.fixed_ratio) {
    ratio = *options.fixed_ratio;
    fit.converged = true;
    fit.diagnostics = "variance ratio fixed by caller";
  } else if (!identifiable) {
    ratio = options.ratio_min;
    fit.converged = true;
    fit.at_boundary = true;
    fit.diagnostics = "every group has one observation; random intercept not identifiable";
  } else {
    const double lo = std::log(options.ratio_min);
    const double hi = std::log(options.ratio_max);
    const int grid = std::max(options.grid_points, 3);
    std::vector<double> theta(static_cast<std::size_t>(grid)), ll(static_cast<std::size_t>(grid));
    for (int i = 0; i < grid; ++i) {
      theta[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (grid - 1);
      ll[static_cast<std::size_t>(i)] = evaluate(d, std::exp(theta[static_cast<std::size_t>(i)]), false).loglik;
    }
    const double best_ll = *std::max_element(ll.begin(), ll.end());
    if (!std::isfinite(best_ll)) {
      fit.converged = false;
      fit.diagnostics = "REML log-likelihood is not finite anywhere on the search bracket";
      ratio = options.ratio_min;
    } else {
      const double tie = 1e-9 * (1.0 + std::fabs(best_ll));
      std::size_t best = 0;
      while (ll[best] < best_ll - tie) ++best;
      // Golden-section refinement inside the neighbouring grid cells.
      double a = theta[best == 0 ? 0 : best - 1];
      double b = theta[std::min<std::size_t>(best + 1, theta.size() - 1)];
      const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
      double c = b - inv_phi * (b - a);
      double e = a + inv_phi * (b - a);
      double fc = evaluate(d, std::exp(c), false).loglik;
      double fe = evaluate(d, std::exp(e), false).loglik;
      int it = 0;
      while (b - a > options.tolerance && it < options.max_iterations) {
        if (fc >= fe) {
          b = e;
          e = c;
          fe = fc;
          c = b - inv_phi * (b - a);
          fc = evaluate(d, std::exp(c), false).loglik;
        } else {
          a = c;
          c = e;
          fc = fe;
          e = a + inv_phi * (b - a);
          fe = evaluate(d, std::exp(e), false).loglik;
        }
        ++it;
      }
      fit.iterations = it;
      double theta_hat = 0.5 * (a + b);
      double ll_hat = evaluate(d, std::exp(theta_hat), false).loglik;
      if (!(ll_hat >= ll[best])) {
        theta_hat = theta[best];
        ll_hat = ll[best];
      }
      // Prefer the smaller variance ratio when the lower bound is as good.
      if (ll.front() >= ll_hat - tie) {
        theta_hat = lo;
        fit.at_boundary = true;
      } else if (theta_hat >= hi - options.tolerance) {
        fit.at_boundary = true;
      }
      ratio = std::exp(theta_hat);
      fit.converged = (b - a) <= options.tolerance && std::isfinite(ll_hat);
      fit.diagnostics = "bracket [" + std::to_string(options.ratio_min) + ", " +
                        std::to_string(options.ratio_max) + "], final log-ratio width " +
                        std::to_string(b - a) + " after " + std::to_string(it) + " iterations";
      if (!fit.converged) fit.diagnostics += "; search did not reach tolerance";
    }
  }

  const RemlEval ev = evaluate(d, ratio, true);
  if (!std::isfinite(ev.loglik)) {
    fit.converged = false;
    fit.diagnostics += "; residual variance is zero or design is singular at the optimum";
    if (ev.beta.size() == 0) throw DesignError("fit_random_intercept: singular design at optimum");
  }
  fit.variance_ratio = ratio;
  fit.sigma_e2 = ev.sigma_e2;
  fit.sigma_u2 = ratio * ev.sigma_e2;
  fit.reml_loglik = ev.loglik;
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c;
    c.name = d.names[static_cast<std::size_t>(j)];
    c.estimate = ev.beta(j);
    c.std_error = ev.a_inv.size() ? std::sqrt(std::max(0.0, ev.sigma_e2 * ev.a_inv(j, j))) : 0.0;
    c.ci_low = c.estimate - 1.96 * c.std_error;
    c.ci_high = c.estimate + 1.96 * c.std_error;
    c.p_value = c.std_error > 0.0 ? std::erfc(std::fabs(c.estimate / c.std_error) / std::numbers::sqrt2)
                                  : (c.estimate == 0.0 ? 1.0 : 0.0);
    fit.beta.push_back(std::move(c));
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Group comparisons

AnovaResult oneway_anova(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw EstimationError("oneway_anova: at least 2 groups are required");
  std::size_t n = 0;
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw EstimationError("oneway_anova: every group needs an observation");
    n += g.size();
    total += std::accumulate(g.begin(), g.end(), 0.0);
  }
  if (n <= groups.size()) throw EstimationError("oneway_anova: total N must exceed the number of groups");
  const double grand = total / static_cast<double>(n);
  AnovaResult out;
  for (const auto& g : groups) {
    const double m = mean(g);
    out.ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
    for (double x : g) out.ss_within += (x - m) * (x - m);
  }
  out.df1 = static_cast<double>(groups.size() - 1);
  out.df2 = static_cast<double>(n - groups.size());
  const double sst = out.ss_between + out.ss_within;
  out.eta_squared = sst > 0.0 ? out.ss_between / sst : 0.0;
  const double msb = out.ss_between / out.df1;
  const double msw = out.ss_within / out.df2;
  if (msw == 0.0) {
    if (out.ss_between > 0.0) {
      out.infinite_f = true;
      out.f = std::numeric_limits<double>::infinity();
      out.p = 0.0;
    } else {
      out.degenerate = true;
      out.f = std::numeric_limits<double>::quiet_NaN();
      out.p = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
  }
  out.f = msb / msw;
  out.p = f_sf(out.df1, out.df2, out.f);
  return out;
}

std::optional<double> cohens_d(std::span<const double> treatment, std::span<const double> baseline) {
  if (treatment.size() < 2 || baseline.size() < 2)
    throw EstimationError("cohens_d: each group needs at least 2 observations");
  const double nt = static_cast<double>(treatment.size());
  const double nb = static_cast<double>(baseline.size());
  const double st = sample_sd(treatment), sb = sample_sd(baseline);
  const double pooled = std::sqrt(((nt - 1.0) * st * st + (nb - 1.0) * sb * sb) / (nt + nb - 2.0));
  if (pooled == 0.0) return std::nullopt;
  return (mean(treatment) - mean(baseline)) / pooled;
}

std::optional<double> paired_d(std::span<const double> treatment, std::span<const double> baseline) {
  if (treatment.size() != baseline.size()) throw PairingError("paired_d: samples differ in length");
  if (treatment.size() < 2) throw EstimationError("paired_d: at least 2 pairs are required");
  std::vector<double> diff(treatment.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = treatment[i] - baseline[i];
    scale = std::max({scale, std::abs(treatment[i]), std::abs(baseline[i])});
  }
  const double sd = sample_sd(diff);
  // Differences that are constant up to rounding count as zero spread.
  if (sd <= 1e-12 * std::max(scale, 1.0)) return std::nullopt;
  return mean(diff) / sd;
}

TTestResult one_sample_t(std::span<const double> values, double null_mean) {
  if (values.size() < 2) throw EstimationError("one_sample_t: at least 2 values are required");
  TTestResult out;
  out.df = static_cast<double>(values.size() - 1);
  out.mean = mean(values);
  out.sd = sample_sd(values);
  if (out.sd == 0.0) return out;
  const double t = (out.mean - null_mean) / (out.sd / std::sqrt(static_cast<double>(values.size())));
  out.t = t;
  out.p = t_two_sided_p(out.df, t);
  return out;
}

}  // namespace statetrait::psychometrics
