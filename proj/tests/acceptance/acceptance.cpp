// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: acceptance <statetrait-cli> <source-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/QR>

#include "quadrature.hpp"
#include "statetrait/archetypes.hpp"
#include "statetrait/audit.hpp"
#include "statetrait/distributions.hpp"
#include "statetrait/pipeline.hpp"
#include "statetrait/profiles.hpp"
#include "statetrait/psychometrics.hpp"
#include "statetrait/rng.hpp"
#include "statetrait/scales.hpp"

namespace fs = std::filesystem;
using namespace statetrait;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail.str("");
      pass = false;
      detail << what << "; ";
    }
  }
};

fs::path g_cli;
fs::path g_source;

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

// ---------------------------------------------------------------------------

void criterion_1(Outcome& out) {
  using namespace psychometrics;
  const std::vector<std::vector<double>> hand{{1, 2, 3}, {4, 5, 6}};
  const double icc_hand = icc_oneway(hand).icc;
  out.require(std::fabs(icc_hand - 12.5 / 15.5) < 1e-9, "hand ICC " + fmt(icc_hand));

  Rng rng(2024);
  const int users = 2000, k = 3, dims = 26;
  std::vector<std::string> ids;
  for (int u = 0; u < users; ++u)
    for (int j = 0; j < k; ++j) ids.push_back("u" + std::to_string(u));
  MethodProfiles mp{"sim", {}, Eigen::MatrixXd(users * k, dims), ids};
  for (int d = 0; d < dims; ++d) {
    mp.dimensions.push_back("d" + std::to_string(d));
    for (int u = 0; u < users; ++u) {
      const double tau = rng.normal();
      for (int j = 0; j < k; ++j) mp.values(u * k + j, d) = tau + std::sqrt(3.0) * rng.normal();
    }
  }
  const auto dec = decompose(mp);
  out.require(std::fabs(dec.mean_icc - 0.25) < 0.02, "Monte-Carlo mean ICC " + fmt(dec.mean_icc));

  Rng r2(99);
  int affine_bad = 0, ospe_bad = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n_groups = 3 + static_cast<int>(r2.below(20));
    std::vector<std::vector<double>> g(static_cast<std::size_t>(n_groups)), h(g.size());
    const double scale = (r2.uniform() < 0.5 ? -1 : 1) * (0.1 + 5 * r2.uniform());
    const double shift = 20 * (r2.uniform() - 0.5);
    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double tau = r2.normal() * r2.uniform() * 2;
      const int kk = 2 + static_cast<int>(r2.below(4));
      for (int j = 0; j < kk; ++j) {
        const double y = tau + r2.normal();
        g[i].push_back(y);
        h[i].push_back(scale * y + shift);
        labels.push_back("g" + std::to_string(i));
        values.push_back(y);
      }
    }
    if (std::fabs(icc_oneway(g).icc - icc_oneway(h).icc) >= 1e-9) ++affine_bad;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
    const auto d = decompose(MethodProfiles{"x", {"d"}, m, labels});
    if (std::fabs(d.dimensions[0].ospe + d.dimensions[0].icc - 1.0) > 1e-15) ++ospe_bad;
  }
  out.require(affine_bad == 0, std::to_string(affine_bad) + " affine violations");
  out.require(ospe_bad == 0, std::to_string(ospe_bad) + " ospe+icc violations");
  if (out.pass)
    out.detail << "hand=" << fmt(icc_hand) << " mc_mean=" << fmt(dec.mean_icc) << " affine=100/100";
}

Eigen::VectorXd ols(const std::vector<double>& y, const std::vector<std::string>& ctx,
                    const std::vector<std::string>& levels) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(y.size()),
                                            static_cast<Eigen::Index>(levels.size() + 1));
  Eigen::VectorXd yy(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = 1.0;
    for (std::size_t l = 0; l < levels.size(); ++l)
      if (ctx[i] == levels[l]) x(r, static_cast<Eigen::Index>(l + 1)) = 1.0;
    yy(r) = y[i];
  }
  return x.colPivHouseholderQr().solve(yy);
}

void criterion_2(Outcome& out) {
  using namespace psychometrics;
  // No user effect at all: residuals are permutations of (d, -d, 0) within each user.
  {
    Rng rng(31);
    const std::vector<std::string> ctxs{"base", "x", "y"};
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    std::vector<double> y;
    std::vector<std::string> ctx, users;
    for (int u = 0; u < 120; ++u) {
      const double d = 0.2 + rng.uniform();
      const double e[3] = {d, -d, 0.0};
      for (int j = 0; j < 3; ++j) {
        ctx.push_back(ctxs[static_cast<std::size_t>(j)]);
        users.push_back("u" + std::to_string(u));
        y.push_back(1.0 + (j == 1 ? 0.4 : j == 2 ? -0.3 : 0.0) + e[perms[u % 6][j]]);
      }
    }
    const auto fit = fit_random_intercept(y, ctx, users, "base");
    const auto ref = ols(y, ctx, {"x", "y"});
    double worst = 0;
    for (int j = 0; j < 3; ++j) worst = std::max(worst, std::fabs(fit.beta[static_cast<std::size_t>(j)].estimate - ref(j)));
    out.require(worst < 1e-6, "zero-variance vs OLS diff " + fmt(worst));
    out.require(fit.sigma_u2 < 1e-6, "zero-variance sigma_u2 " + fmt(fit.sigma_u2));
    if (out.pass) out.detail << "ols_diff=" << fmt(worst) << " ";
  }
  {
    Rng rng(7);
    std::vector<double> y;
    std::vector<std::string> ctx, users;
    for (int u = 0; u < 200; ++u) {
      const double g = rng.normal();
      for (int j = 0; j < 10; ++j) {
        const bool treated = j % 2 == 1;
        ctx.push_back(treated ? "treated" : "AskReddit");
        users.push_back("u" + std::to_string(u));
        y.push_back(1.0 + g + (treated ? 0.5 : 0.0) + 0.1 * rng.normal());
      }
    }
    const auto fit = fit_random_intercept(y, ctx, users, "AskReddit");
    const double b = fit.find("treated")->estimate;
    out.require(std::fabs(b - 0.5) < 0.02, "balanced beta " + fmt(b));
    if (out.pass) out.detail << "balanced_beta=" << fmt(b) << " ";
  }
  {
    Rng rng(8);
    std::vector<double> y;
    std::vector<std::string> ctx, users;
    for (int u = 0; u < 1000; ++u) {
      const double g = rng.normal();
      for (int j = 0; j < 10; ++j) {
        const bool treated = j % 2 == 1;
        ctx.push_back(treated ? "t" : "base");
        users.push_back("u" + std::to_string(u));
        y.push_back(g + (treated ? 0.3 : 0.0) + rng.normal());
      }
    }
    const auto fit = fit_random_intercept(y, ctx, users, "base");
    const double b = fit.find("t")->estimate;
    out.require(std::fabs(b - 0.3) < 0.05, "simulation beta " + fmt(b));
    out.require(std::fabs(fit.sigma_u2 - 1.0) < 0.15, "simulation sigma_u2 " + fmt(fit.sigma_u2));
    if (out.pass) out.detail << "beta=" << fmt(b) << " sigma_u2=" << fmt(fit.sigma_u2);
  }
}

void criterion_3(Outcome& out) {
  Rng rng(303);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    if (i % 2 == 0) {
      const double d1 = 1 + static_cast<double>(rng.below(12));
      const double d2 = 2 + static_cast<double>(rng.below(60));
      const double x = 0.05 + 6 * rng.uniform();
      worst = std::max(worst, std::fabs(psychometrics::f_cdf(d1, d2, x) - testing::f_cdf_quadrature(d1, d2, x)));
    } else {
      const double nu = 1 + 40 * rng.uniform();
      const double x = 8 * (rng.uniform() - 0.5);
      worst = std::max(worst, std::fabs(psychometrics::t_cdf(nu, x) - testing::t_cdf_quadrature(nu, x)));
    }
  }
  out.require(worst < 1e-9, "cdf vs quadrature " + fmt(worst));
  double worst_id = 0;
  for (int i = 0; i < 200; ++i) {
    const double nu = 1 + 60 * rng.uniform();
    const double t = 12 * (rng.uniform() - 0.5);
    worst_id = std::max(worst_id, std::fabs(psychometrics::f_cdf(1, nu, t * t) -
                                            (2 * psychometrics::t_cdf(nu, std::fabs(t)) - 1)));
  }
  out.require(worst_id < 1e-9, "F/t identity " + fmt(worst_id));
  if (out.pass) out.detail << "max_cdf_err=" << fmt(worst) << " max_identity_err=" << fmt(worst_id);
}

scales::RawProfile raw(const std::string& id, extraction::Method m, std::vector<double> v) {
  std::vector<std::string> dims;
  for (std::size_t i = 0; i < v.size(); ++i) dims.push_back("d" + std::to_string(i));
  return {id, m, dims, std::move(v)};
}

void criterion_4(Outcome& out) {
  using extraction::Method;
  Rng rng(10);
  std::vector<scales::RawProfile> r;
  for (int i = 0; i < 137; ++i) {
    std::vector<double> lex(26), sem(26);
    for (auto& v : lex) v = 1 + 4 * rng.uniform();
    for (auto& v : sem) v = -1 + 8 * rng.uniform();
    r.push_back(raw(std::to_string(i), Method::Lex, lex));
    r.push_back(raw(std::to_string(i), Method::Sem, sem));
  }
  const auto n = profiles::fit_normalizer(r);
  double worst_mean = 0, worst_sd = 0;
  std::map<std::string, profiles::NormalizedProfile> lex, sem;
  for (const auto& p : r) (p.method == Method::Lex ? lex : sem)[p.post_id] = profiles::normalize(p, n);
  for (auto* side : {&lex, &sem}) {
    for (std::size_t j = 0; j < 26; ++j) {
      double s = 0, ss = 0;
      for (const auto& [id, p] : *side) s += p.z[j];
      const double mean = s / static_cast<double>(side->size());
      for (const auto& [id, p] : *side) ss += (p.z[j] - mean) * (p.z[j] - mean);
      const double sd = std::sqrt(ss / static_cast<double>(side->size() - 1));
      worst_mean = std::max(worst_mean, std::fabs(mean));
      worst_sd = std::max(worst_sd, std::fabs(sd - 1));
    }
  }
  out.require(worst_mean < 1e-9 && worst_sd < 1e-9, "z moments mean " + fmt(worst_mean) + " sd " + fmt(worst_sd));

  bool fuse_ok = true, agree_ok = true;
  for (const auto& [id, a] : lex) {
    const auto& b = sem.at(id);
    fuse_ok &= profiles::fuse(a, b).z == profiles::fuse(b, a).z;
    fuse_ok &= profiles::fuse(a, a).z == a.z;
    auto neg = a;
    neg.method = Method::Sem;
    for (auto& v : neg.z) v = -v;
    const auto self = profiles::profile_agreement(a, a);
    const auto opp = profiles::profile_agreement(a, neg);
    agree_ok &= self && std::fabs(*self - 1) < 1e-12 && opp && std::fabs(*opp + 1) < 1e-12;
  }
  out.require(fuse_ok, "fuse symmetry/idempotence");
  out.require(agree_ok, "profile agreement self/negation");
  if (out.pass) out.detail << "max|mean|=" << fmt(worst_mean) << " max|sd-1|=" << fmt(worst_sd) << " posts=137";
}

void criterion_5(Outcome& out) {
  Rng rng(2);
  bool involution = true;
  for (int i = 0; i < 1000; ++i) {
    const double lo = -1 + static_cast<double>(rng.below(3)), hi = lo + 1 + static_cast<double>(rng.below(8));
    const double v = lo + static_cast<double>(rng.below(static_cast<std::uint64_t>(hi - lo) + 1));
    involution &= scales::reverse_score(scales::reverse_score(v, lo, hi), lo, hi) == v;
  }
  out.require(involution, "reversal involution");

  const auto reg = scales::default_registry();
  std::map<std::string, double> items;
  for (const auto& f : reg.frameworks)
    for (const auto& d : f.dimensions)
      for (const auto& i : d.items) items[i.id] = 0.5 * (f.response_min + f.response_max);
  const auto p = scales::score_subscales(items, reg);
  bool midpoint = p.scores.size() == 26;
  for (std::size_t j = 0; j < p.dimensions.size(); ++j) {
    const auto& f = reg.framework_of(p.dimensions[j]);
    midpoint &= p.scores[j] == 0.5 * (f.response_min + f.response_max);
  }
  out.require(midpoint, "midpoint fixed point");

  const std::map<std::string, std::size_t> expected{
      {"Extraversion", 8}, {"Agreeableness", 9}, {"Conscientiousness", 9}, {"Neuroticism", 8},
      {"Openness", 10}, {"Power", 5}, {"Achievement", 6}, {"Hedonism", 3}, {"Stimulation", 3},
      {"Self-Direction", 6}, {"Universalism", 9}, {"Benevolence", 8}, {"Tradition", 5}, {"Conformity", 4},
      {"Security", 5}, {"Intrinsic Motivation", 9}, {"Extrinsic Motivation", 9}, {"Competence", 5},
      {"Autonomy", 5}, {"Relatedness", 5}, {"Investment", 4}, {"Gambling", 4}, {"Health/Safety", 8},
      {"Recreational", 8}, {"Ethical", 8}, {"Social", 8}};
  bool counts = reg.total_dimensions() == 26 && reg.total_items() == 171;
  for (const auto& [name, k] : expected) counts &= reg.dimension(name).items.size() == k;
  out.require(counts, "registry counts");
  if (out.pass) out.detail << "dimensions=" << reg.total_dimensions() << " items=" << reg.total_items();
}

double choose2(double n) { return n * (n - 1) / 2; }

double ari(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> nij;
  std::map<int, double> ai, bj;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++nij[{a[i], b[i]}];
    ++ai[a[i]];
    ++bj[b[i]];
  }
  double index = 0, sa = 0, sb = 0;
  for (auto& [k, v] : nij) index += choose2(v);
  for (auto& [k, v] : ai) sa += choose2(v);
  for (auto& [k, v] : bj) sb += choose2(v);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  const double max = 0.5 * (sa + sb);
  return max == expected ? 1.0 : (index - expected) / (max - expected);
}

std::vector<int> brute_force_two(const Eigen::MatrixXd& x) {
  const int n = static_cast<int>(x.rows());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> out;
  for (int mask = 1; mask < (1 << n) - 1; ++mask) {
    std::vector<int> l(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) l[static_cast<std::size_t>(i)] = (mask >> i) & 1;
    double inertia = 0;
    for (int c = 0; c < 2; ++c) {
      Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(x.cols());
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (l[static_cast<std::size_t>(i)] == c) m += x.row(i), ++cnt;
      m /= cnt;
      for (int i = 0; i < n; ++i)
        if (l[static_cast<std::size_t>(i)] == c) inertia += (x.row(i) - m).squaredNorm();
    }
    if (inertia < best) best = inertia, out = l;
  }
  return out;
}

void criterion_6(Outcome& out) {
  using namespace archetypes;
  Eigen::MatrixXd pairs(4, 2);
  pairs << 0, 0, 0.1, 0.2, 9, 9, 9.2, 8.9;
  const double a = ari(kmeans(pairs, 2, 3).assignments, brute_force_two(pairs));
  out.require(a == 1.0, "ARI " + fmt(a));

  Rng rng(5);
  Eigen::MatrixXd two(40, 5);
  for (Eigen::Index i = 0; i < two.rows(); ++i)
    for (Eigen::Index j = 0; j < two.cols(); ++j) two(i, j) = (i < 20 ? 0.0 : 6.0) + 0.5 * rng.normal();
  const std::vector<int> ks{2, 3, 4, 5, 6};
  const int best = select_k(two, ks, 1).best_k;
  out.require(best == 2, "silhouette picked k=" + std::to_string(best));

  Rng r2(17);
  bool monotone = true, deterministic = true;
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd x(60, 26);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = r2.normal() + static_cast<double>(i % 3) * 0.8;
    const auto m = kmeans(x, 6, static_cast<std::uint64_t>(rep));
    for (std::size_t t = 1; t < m.inertia_trace.size(); ++t)
      monotone &= m.inertia_trace[t] <= m.inertia_trace[t - 1] * (1 + 1e-12);
    const auto m2 = kmeans(x, 6, static_cast<std::uint64_t>(rep));
    KMeansOptions par;
    par.parallelism = 4;
    const auto m3 = kmeans(x, 6, static_cast<std::uint64_t>(rep), par);
    deterministic &= m.centroids == m2.centroids && m.centroids == m3.centroids && m.assignments == m2.assignments;
  }
  out.require(monotone, "inertia increased");
  out.require(deterministic, "seeded runs differ");
  if (out.pass) out.detail << "ari=1 best_k=2 monotone=20/20 deterministic=20/20";
}

std::vector<audit::Condition> six_archetypes() {
  std::vector<std::pair<std::string, std::string>> cards;
  for (const char* n : {"Achiever", "Guardian", "Explorer", "Connector", "Analyst", "Maverick"})
    cards.emplace_back(n, std::string("PSYCHOLOGICAL PROFILE CARD for ") + n);
  return audit::make_conditions(cards);
}

void criterion_7(Outcome& out) {
  using namespace audit;
  auto qs = bundled_dilemmas();
  const auto ops = bundled_opinion_examples();
  for (int i = 0; i < 77; ++i) {
    Question q = ops[static_cast<std::size_t>(i) % ops.size()];
    q.id = "opinion-fixture-" + std::to_string(i);
    qs.push_back(q);
  }
  const auto conds = six_archetypes();
  std::vector<std::string> refs;
  for (const auto& q : qs) refs.push_back("A reference answer to: " + q.text);
  providers::RewardMock blind("blind", 3), up("up", 3, 0.5), down("down", 3, -0.5);
  std::vector<providers::RewardProvider*> models{&blind, &up, &down};
  GridOptions opt;
  opt.parallelism = 4;
  const auto g = run_reward_grid(qs, refs, conds, models, opt);
  bool dims = qs.size() == 127 && g.complete();
  for (std::size_t m = 0; m < models.size(); ++m) {
    std::size_t n = 0;
    for (std::size_t q = 0; q < qs.size(); ++q)
      for (std::size_t c = 0; c < conds.size(); ++c) n += g.cell(m, q, c).has_value();
    dims &= n == 889;
  }
  out.require(dims, "grid is not 127 x 7 = 889 per model");

  const auto r = invariance_report(g);
  bool blind_zero = true, opposite = true;
  for (const auto& a : r.archetypes) {
    const auto& e = r.effect("blind", a);
    blind_zero &= e.d.has_value() && *e.d == 0.0;
    const auto& u = r.effect("up", a);
    const auto& d = r.effect("down", a);
    opposite &= u.d && d.d && *u.d > 0 && *d.d < 0;
  }
  for (const auto& ds : r.datasets)
    if (ds.model == "blind") blind_zero &= ds.anova.eta_squared == 0.0;
  out.require(blind_zero, "blind mock d or eta^2 nonzero");
  out.require(opposite, "biased pair not opposite-sign");
  std::set<std::string> flagged;
  for (const auto& d : r.disagreements)
    if (d.model_positive == "up" && d.model_negative == "down") flagged.insert(d.archetype);
  out.require(!r.disagreements.empty() && flagged.size() == r.archetypes.size(), "disagreement flag not raised");
  if (out.pass)
    out.detail << "cells_per_rm=889 blind_d=0 eta2=0 d_up=" << fmt(*r.effect("up", r.archetypes[0]).d)
               << " disagreements=" << r.disagreements.size();
}

void criterion_8(Outcome& out) {
  using namespace audit;
  Rng rng(808);
  double worst = 0;
  std::size_t checked = 0;
  const auto conds = six_archetypes();
  for (int rep = 0; rep < 6; ++rep) {
    auto all = bundled_dilemmas();
    std::vector<Question> qs;
    for (const auto& q : all)
      if (rng.uniform() < 0.2) qs.push_back(q);
    if (qs.empty()) qs.push_back(all[0]);
    const std::size_t n_models = 1 + rng.below(3);
    std::vector<providers::TemplateCompletionMock> mocks;
    for (std::size_t m = 0; m < n_models; ++m) mocks.emplace_back(rng.next(), "m" + std::to_string(m));
    std::vector<providers::CompletionProvider*> models;
    for (auto& m : mocks) models.push_back(&m);
    const auto g = run_generation_grid(qs, conds, models);
    providers::HashedBowEmbedder e(providers::kDefaultEmbeddingDim, static_cast<std::uint64_t>(rep));
    const auto r = sensitivity_report(pairwise_similarity(g, e), conds);
    for (const auto& d : r.deviations) {
      if (d.scope != "pooled") continue;
      for (const auto& p : r.pairs) {
        if (!p.involves_baseline) continue;
        if (p.a != d.archetype && p.b != d.archetype) continue;
        worst = std::max(worst, std::fabs(d.deviation.mean - (1.0 - p.similarity.mean)));
        ++checked;
      }
    }
  }
  out.require(checked == 36, std::to_string(checked) + " baseline pairs checked");
  out.require(worst <= 1e-12, "max gap " + fmt(worst));
  if (out.pass) out.detail << "grids=6 pairs=" << checked << " max_gap=" << fmt(worst);
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), root).generic_string()] = s.str();
  }
  return files;
}

int run_cli(const fs::path& out_dir, int parallelism) {
  std::ostringstream cmd;
  cmd << '"' << g_cli.string() << "\" run all --config \"" << (g_source / "data/toy/config.json").string()
      << "\" --mock --seed 7 --quiet --parallelism " << parallelism << " --out \"" << out_dir.string() << '"';
  const int status = std::system(cmd.str().c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("statetrait-acceptance-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

void criterion_9(Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::map<std::string, std::string>> trees;
  int idx = 0;
  for (int p : {1, 1, 8}) {
    const auto dir = scratch("golden-" + std::to_string(idx++));
    const int rc = run_cli(dir, p);
    out.require(rc == 0, "cli exit " + std::to_string(rc) + " at parallelism " + std::to_string(p));
    trees.push_back(rc == 0 ? read_tree(dir) : std::map<std::string, std::string>{});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.require(!trees[0].empty(), "no outputs");
  out.require(trees[0] == trees[1], "two runs differ");
  out.require(trees[0] == trees[2], "parallelism 1 vs 8 differ");
  out.require(secs < 60, "three runs took " + fmt(secs) + " s");
  if (out.pass) out.detail << "files=" << trees[0].size() << " identical=3/3";
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

void criterion_10(Outcome& out) {
  const auto dir = scratch("formats");
  auto cfg = pipeline::load_config(g_source / "data/toy/config.json");
  pipeline::RunOptions opt;
  opt.output_dir = dir;
  opt.force_mock = true;
  const auto rr = pipeline::run(pipeline::Stage::All, cfg, opt);
  out.require(rr.exit_code == 0, "pipeline exit " + std::to_string(rr.exit_code) + " " + rr.error);
  const std::vector<std::pair<std::string, std::string>> goldens{
      {"table3_decomposition_summary.header", "decompose/decomposition_summary.csv"},
      {"table3_decomposition_dimensions.header", "decompose/decomposition_dimensions.csv"},
      {"table4_regression.header", "validate/regression.csv"},
      {"table5_sensitivity_models.header", "audit-gen/sensitivity_models.csv"},
      {"table8_sensitivity_tests.header", "audit-gen/sensitivity_tests.csv"},
      {"table9_baseline_deviation.header", "audit-gen/baseline_deviation.csv"},
      {"table10_condition_pairs.header", "audit-gen/condition_pairs.csv"},
      {"table6_reward_directions.header", "audit-reward/reward_directions.csv"},
      {"table11_reward_datasets.header", "audit-reward/reward_datasets.csv"},
      {"table12_reward_archetypes.header", "audit-reward/reward_archetypes.csv"},
  };
  std::size_t matched = 0;
  for (const auto& [golden, produced] : goldens) {
    const auto want = first_line(g_source / "tests/golden" / golden);
    const auto got = first_line(dir / produced);
    if (!want.empty() && want == got)
      ++matched;
    else
      out.require(false, produced + " header mismatch");
  }
  if (out.pass) out.detail << "headers=" << matched << "/" << goldens.size();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <statetrait-cli> <source-dir>\n";
    return 2;
  }
  g_cli = argv[1];
  g_source = argv[2];

  struct Criterion {
    int id;
    double budget_seconds;
    std::function<void(Outcome&)> body;
  };
  const std::vector<Criterion> criteria{
      {1, 10, criterion_1}, {2, 30, criterion_2}, {3, 60, criterion_3}, {4, 60, criterion_4},
      {5, 60, criterion_5}, {6, 60, criterion_6}, {7, 20, criterion_7}, {8, 60, criterion_8},
      {9, 60, criterion_9}, {10, 60, criterion_10},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.require(secs < c.budget_seconds, "over budget");
    failures += !out.pass;
    std::printf("CRITERION %d: %s %s (%.2fs)\n", c.id, out.pass ? "PASS" : "FAIL", out.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  fs::remove_all(fs::temp_directory_path() / ("statetrait-acceptance-" + std::to_string(::getpid())));
  return failures == 0 ? 0 : 1;
}
