#include "statetrait/archetypes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "statetrait/embedded.hpp"
#include "statetrait/error.hpp"
#include "statetrait/providers.hpp"
#include "statetrait/rng.hpp"
#include "statetrait/text.hpp"

namespace statetrait::archetypes {

using Eigen::Index;
using nlohmann::json;

namespace {

double sqdist(const Eigen::MatrixXd& x, Index i, const Eigen::MatrixXd& c, Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

struct Run {
  Eigen::MatrixXd centroids;
  std::vector<int> labels;
  std::vector<double> trace;
  double inertia = 0;
  int iterations = 0;
  bool converged = false;
  int reseeded = 0;
};

Eigen::MatrixXd plus_plus(const Eigen::MatrixXd& x, int k, Rng& rng) {
  const Index n = x.rows();
  Eigen::MatrixXd c(k, x.cols());
  c.row(0) = x.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  for (int j = 1; j < k; ++j) {
    double total = 0;
    for (Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sqdist(x, i, c, j - 1));
      total += d2[static_cast<std::size_t>(i)];
    }
    Index pick = n - 1;
    if (total <= 0) {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      for (Index i = 0; i < n; ++i) {
        r -= d2[static_cast<std::size_t>(i)];
        if (r < 0) {
          pick = i;
          break;
        }
      }
    }
    c.row(j) = x.row(pick);
  }
  return c;
}

// Assignment step; returns inertia.
double assign_all(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, std::vector<int>& labels) {
  double inertia = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double bd = sqdist(x, i, c, 0);
    for (Index j = 1; j < c.rows(); ++j) {
      const double d = sqdist(x, i, c, j);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(j);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    inertia += bd;
  }
  return inertia;
}

Run lloyd(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int max_iterations) {
  Rng rng(seed);
  Run run;
  run.centroids = plus_plus(x, k, rng);
  run.labels.assign(static_cast<std::size_t>(x.rows()), -1);
  std::vector<int> prev;
  for (int it = 0; it < max_iterations; ++it) {
    run.inertia = assign_all(x, run.centroids, run.labels);
    run.trace.push_back(run.inertia);
    run.iterations = it + 1;
    if (run.labels == prev) {
      run.converged = true;
      break;
    }
    prev = run.labels;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < x.rows(); ++i) {
      sums.row(run.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(i)])];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        run.centroids.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
        continue;
      }
      // Farthest point from its current centroid, lowest row on ties.
      Index far = 0;
      double fd = -1;
      for (Index i = 0; i < x.rows(); ++i) {
        const double d = sqdist(x, i, run.centroids, run.labels[static_cast<std::size_t>(i)]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      run.centroids.row(j) = x.row(far);
      ++run.reseeded;
    }
  }
  return run;
}

}  // namespace

ArchetypeModel kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 2) throw ConfigError("k must be at least 2");
  if (x.rows() < k) throw ConfigError("k = " + std::to_string(k) + " exceeds the " + std::to_string(x.rows()) + " rows");
  if (!x.allFinite()) throw PreconditionError("profile matrix has non-finite entries");
  if (options.restarts < 1 || options.max_iterations < 1) throw ConfigError("restarts and iterations must be >= 1");
  const auto runs = providers::parallel_map<Run>(
      static_cast<std::size_t>(options.restarts), options.parallelism,
      [&](std::size_t r) { return lloyd(x, k, text::mix64(seed + 0x9E37u * (r + 1)), options.max_iterations); });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;
  const Run& b = runs[best];
  ArchetypeModel m;
  m.k = k;
  m.centroids = b.centroids;
  m.seed = seed;
  m.inertia = b.inertia;
  m.inertia_trace = b.trace;
  m.assignments = b.labels;
  m.iterations = b.iterations;
  m.converged = b.converged;
  m.reseeded_clusters = b.reseeded;
  set_labels(m, {});
  return m;
}

void set_labels(ArchetypeModel& model, std::vector<std::string> labels) {
  if (labels.empty()) {
    for (int j = 0; j < model.k; ++j)
      labels.push_back(model.k <= static_cast<int>(kDefaultLabels.size()) ? kDefaultLabels[static_cast<std::size_t>(j)]
                                                                           : "Archetype-" + std::to_string(j + 1));
  }
  if (labels.size() != static_cast<std::size_t>(model.k))
    throw ConfigError("expected " + std::to_string(model.k) + " archetype labels, got " + std::to_string(labels.size()));
  if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size())
    throw ConfigError("archetype labels must be unique");
  model.labels = std::move(labels);
}

std::vector<double> silhouette_samples(const Eigen::MatrixXd& x, std::span<const int> labels) {
  const Index n = x.rows();
  if (labels.size() != static_cast<std::size_t>(n)) throw PairingError("one label per row required");
  const int k = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
  for (int l : labels) {
    if (l < 0) throw PreconditionError("negative cluster label");
    ++sizes[static_cast<std::size_t>(l)];
  }
  if (std::count_if(sizes.begin(), sizes.end(), [](int s) { return s > 0; }) < 2)
    throw EstimationError("silhouette needs at least two non-empty clusters");
  std::vector<double> s(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    const int li = labels[static_cast<std::size_t>(i)];
    if (sizes[static_cast<std::size_t>(li)] == 1) continue;
    std::vector<double> sum(sizes.size(), 0.0);
    for (Index j = 0; j < n; ++j)
      if (j != i) sum[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += (x.row(i) - x.row(j)).norm();
    const double a = sum[static_cast<std::size_t>(li)] / (sizes[static_cast<std::size_t>(li)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sizes.size(); ++c)
      if (static_cast<int>(c) != li && sizes[c] > 0) b = std::min(b, sum[c] / sizes[c]);
    const double denom = std::max(a, b);
    s[static_cast<std::size_t>(i)] = denom > 0 ? (b - a) / denom : 0.0;
  }
  return s;
}

double silhouette(const Eigen::MatrixXd& x, std::span<const int> labels) {
  const auto s = silhouette_samples(x, labels);
  double t = 0;
  for (double v : s) t += v;
  return t / static_cast<double>(s.size());
}

KSelection select_k(const Eigen::MatrixXd& x, std::span<const int> k_range, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k_range.empty()) throw ConfigError("empty k range");
  KSelection sel;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> ks(k_range.begin(), k_range.end());
  std::sort(ks.begin(), ks.end());
  for (int k : ks) {
    if (k < 2 || k > x.rows() - 1) throw ConfigError("k = " + std::to_string(k) + " outside [2, rows - 1]");
    const auto m = kmeans(x, k, seed, options);
    double s = 0.0;
    const std::set<int> used(m.assignments.begin(), m.assignments.end());
    if (used.size() >= 2) s = silhouette(x, m.assignments);
    sel.silhouettes.emplace_back(k, s);
    if (s > best) {
      best = s;
      sel.best_k = k;
    }
  }
  return sel;
}

int assign(const Eigen::VectorXd& profile, const ArchetypeModel& model) {
  if (profile.size() != model.centroids.cols()) throw PairingError("profile dimension does not match the model");
  int best = 0;
  double bd = (model.centroids.row(0).transpose() - profile).squaredNorm();
  for (Index j = 1; j < model.centroids.rows(); ++j) {
    const double d = (model.centroids.row(j).transpose() - profile).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

std::size_t nearest_exemplar(const Eigen::VectorXd& centroid, const Eigen::MatrixXd& x) {
  if (x.rows() == 0) throw PreconditionError("no profiles to choose an exemplar from");
  std::size_t best = 0;
  double bd = (x.row(0).transpose() - centroid).squaredNorm();
  for (Index i = 1; i < x.rows(); ++i) {
    const double d = (x.row(i).transpose() - centroid).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

DiversityStats diversity_stats(const std::map<std::string, std::vector<int>>& by_user) {
  DiversityStats d;
  d.n_users = by_user.size();
  if (by_user.empty()) return d;
  std::size_t one = 0, two = 0, three = 0;
  for (const auto& [user, a] : by_user) {
    if (a.empty()) throw PreconditionError("user '" + user + "' has no assignments");
    const auto distinct = std::set<int>(a.begin(), a.end()).size();
    if (distinct == 1)
      ++one;
    else if (distinct == 2)
      ++two;
    else
      ++three;
  }
  const double n = static_cast<double>(d.n_users);
  d.frac_one = static_cast<double>(one) / n;
  d.frac_two = static_cast<double>(two) / n;
  d.frac_three_plus = static_cast<double>(three) / n;
  d.frac_at_least_two = static_cast<double>(two + three) / n;
  return d;
}

// ---------------------------------------------------------------------------

namespace {

bool band_matches(const ThresholdBand& b, double v) {
  if (b.op == ">=") return v >= b.cutoff;
  if (b.op == "<=") return v <= b.cutoff;
  if (b.op == ">") return v > b.cutoff;
  return v < b.cutoff;
}

}  // namespace

std::string Thresholds::describe(const std::string& dimension, double raw, double z) const {
  auto it = dimensions.find(dimension);
  if (it == dimensions.end()) throw ConfigError("no threshold entry for dimension '" + dimension + "'");
  for (const auto& b : it->second.bands)
    if (band_matches(b, b.basis == ThresholdBand::Basis::Raw ? raw : z)) return b.descriptor;
  return it->second.fallback;
}

std::string Thresholds::magnitude(double z) const {
  for (const auto& [cut, name] : magnitude_bands)
    if (std::fabs(z) > cut) return name;
  return magnitude_default;
}

Thresholds load_thresholds(const json& doc) {
  Thresholds t;
  try {
    for (const auto& b : doc.at("magnitude_bands")) t.magnitude_bands.emplace_back(b.at(0).get<double>(), b.at(1).get<std::string>());
    std::sort(t.magnitude_bands.begin(), t.magnitude_bands.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    t.magnitude_default = doc.value("magnitude_default", t.magnitude_default);
    for (const auto& [dim, dj] : doc.at("dimensions").items()) {
      DimensionThresholds d;
      d.fallback = dj.at("default").get<std::string>();
      for (const auto& bj : dj.at("bands")) {
        ThresholdBand b;
        const std::string basis = bj.at("basis").get<std::string>();
        if (basis != "raw" && basis != "z") throw ConfigError("threshold basis must be 'raw' or 'z'");
        b.basis = basis == "raw" ? ThresholdBand::Basis::Raw : ThresholdBand::Basis::Z;
        b.op = bj.at("op").get<std::string>();
        if (b.op != ">=" && b.op != "<=" && b.op != ">" && b.op != "<") throw ConfigError("unknown threshold op '" + b.op + "'");
        b.cutoff = bj.at("cutoff").get<double>();
        b.descriptor = bj.at("descriptor").get<std::string>();
        d.bands.push_back(std::move(b));
      }
      t.dimensions[dim] = std::move(d);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed thresholds: ") + e.what());
  }
  return t;
}

Thresholds load_thresholds_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open thresholds '" + path + "'");
  json doc = json::parse(f, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("thresholds '" + path + "' is not valid JSON");
  return load_thresholds(doc);
}

Thresholds default_thresholds() { return load_thresholds(json::parse(*embedded::lookup("thresholds.json"))); }

const CardScore& ProfileCard::score(const std::string& dimension) const {
  for (const auto& s : scores)
    if (s.dimension == dimension) return s;
  throw ConfigError("card has no dimension '" + dimension + "'");
}

namespace {

std::string scale_label(const scales::Framework& f) {
  char buf[64];
  if (f.response_min < 0)
    std::snprintf(buf, sizeof buf, "%g to %g", f.response_min, f.response_max);
  else
    std::snprintf(buf, sizeof buf, "%g-%g", f.response_min, f.response_max);
  return buf;
}

const scales::Framework& need(const scales::ScaleRegistry& r, const char* name) {
  const auto* f = r.find_framework(name);
  if (!f) throw ConfigError(std::string("registry lacks framework ") + name);
  return *f;
}

std::string f2(double v) { return text::fixed(v, 2); }

}  // namespace

ProfileCard render_profile_card(const Eigen::VectorXd& z, const PopulationStats& stats,
                                const scales::ScaleRegistry& registry, const Thresholds& thresholds,
                                std::string label) {
  const auto dims = registry.dimension_names();
  if (static_cast<std::size_t>(z.size()) != dims.size()) throw PairingError("centroid length does not match registry");
  if (stats.dimensions != dims) throw ConfigError("population statistics do not cover the registry dimensions");
  ProfileCard card;
  card.label = std::move(label);
  for (std::size_t j = 0; j < dims.size(); ++j) {
    const auto& f = registry.framework_of(dims[j]);
    CardScore s;
    s.dimension = dims[j];
    s.z = z(static_cast<Index>(j));
    const double raw = stats.mean[j] + s.z * stats.sd[j];
    s.raw = std::clamp(raw, f.response_min, f.response_max);
    s.clamped = s.raw != raw;
    s.descriptor = thresholds.describe(dims[j], s.raw, s.z);
    s.magnitude = thresholds.magnitude(s.z);
    card.scores.push_back(std::move(s));
  }

  const auto& bfi = need(registry, "BFI");
  const auto& svs = need(registry, "SVS");
  const auto& sdt = need(registry, "SDT");
  const auto& dos = need(registry, "DOSPERT");
  card.personality_scale = scale_label(bfi);
  card.values_scale = scale_label(svs);
  card.motivation_scale = scale_label(sdt);
  card.risk_scale = scale_label(dos);

  std::vector<const CardScore*> values;
  for (const auto& d : svs.dimensions) values.push_back(&card.score(d.name));
  std::stable_sort(values.begin(), values.end(), [](const auto* a, const auto* b) { return a->raw > b->raw; });
  std::string summary;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, values.size()); ++i) {
    card.top_values.push_back(values[i]->dimension);
    summary += (i ? "; " : "") + values[i]->descriptor;
  }
  card.values_summary = summary;

  const CardScore* drive = nullptr;
  for (const auto& d : sdt.dimensions) {
    const auto& s = card.score(d.name);
    if (!drive || s.z > drive->z) drive = &s;
  }
  card.primary_drive = drive ? drive->dimension + " (" + drive->descriptor + ")" : "";

  const auto& neur = card.score("Neuroticism");
  const auto& neur_bands = thresholds.dimensions.at("Neuroticism").bands;
  if (!neur_bands.empty() && neur.descriptor == neur_bands.front().descriptor)
    card.emotional_expression = "Voices worry openly and looks for reassurance.";
  else if (neur_bands.size() > 1 && neur.descriptor == neur_bands[1].descriptor)
    card.emotional_expression = "Stays calm and even-toned under pressure.";
  else
    card.emotional_expression = "Shows moderate, situation-dependent emotion.";

  const double ez = card.score("Extraversion").z, az = card.score("Agreeableness").z;
  const std::string e = ez > 0.5 ? "expressive and talkative" : ez < -0.5 ? "brief and reserved" : "conversational";
  const std::string a = az > 0.5 ? "warm and accommodating" : az < -0.5 ? "direct and critical" : "even-handed";
  card.communication_style = "Communicates in a way that is " + e + "; tone is " + a + ".";

  double risk = 0;
  for (const auto& d : dos.dimensions) risk += card.score(d.name).z;
  risk /= static_cast<double>(dos.dimensions.size());
  const std::string r = risk > 0.5 ? "Leans toward bold, risky options" : risk < -0.5 ? "Prefers cautious, safe options"
                                                                                       : "Weighs risks case by case";
  card.decision_advice = r + (card.top_values.empty() ? "." : ", guided by " + card.top_values.front() + ".");
  return card;
}

std::string ProfileCard::text() const {
  auto s = [this](const char* d) { return score(d); };
  std::string out = "PSYCHOLOGICAL PROFILE CARD\n";
  out += "PERSONALITY (Big Five) [Scale: " + personality_scale + "]\n";
  const std::string bmax = personality_scale.substr(personality_scale.find('-') + 1);
  for (const char* d : {"Openness", "Conscientiousness", "Extraversion", "Agreeableness", "Neuroticism"})
    out += std::string("- ") + d + ": " + f2(s(d).raw) + "/" + bmax + " (" + s(d).descriptor + ")\n";
  out += "\nCORE VALUES (Schwartz) [Scale: " + values_scale + "]\nTop 3: ";
  for (std::size_t i = 0; i < top_values.size(); ++i)
    out += (i ? ", " : "") + top_values[i] + ": " + f2(score(top_values[i]).raw);
  out += "\nSummary: " + values_summary + "\n";
  out += "\nMOTIVATION PROFILE (SDT) [Scale: " + motivation_scale + "]\n";
  out += "Intrinsic: " + f2(s("Intrinsic Motivation").raw) + " | Extrinsic: " + f2(s("Extrinsic Motivation").raw) +
         " | Autonomy: " + f2(s("Autonomy").raw) + " | Competence: " + f2(s("Competence").raw) +
         " | Relatedness: " + f2(s("Relatedness").raw) + "\n";
  out += "Primary Drive: " + primary_drive + "\n";
  out += "\nRISK ATTITUDES (DOSPERT) [Scale: " + risk_scale + "]\n";
  out += "Financial: " + f2(s("Investment").raw) + " | Gambling: " + f2(s("Gambling").raw) +
         " | Health/Safety: " + f2(s("Health/Safety").raw) + " | Social: " + f2(s("Social").raw) +
         " | Ethical: " + f2(s("Ethical").raw) + " | Recreational: " + f2(s("Recreational").raw) + "\n";
  out += "\nBEHAVIORAL GUIDANCE:\n";
  out += "Emotional Expression: " + emotional_expression + "\n";
  out += "Communication Style: " + communication_style + "\n";
  out += "Decision Advice: " + decision_advice + "\n";
  return out;
}

}  // namespace statetrait::archetypes
