#include "statetrait/profiles.hpp"

#include <cmath>

#include "statetrait/error.hpp"
#include "statetrait/psychometrics.hpp"

namespace statetrait::profiles {

const DimensionStats& Normalizer::at(Method m, std::size_t dim) const {
  auto it = stats.find(m);
  if (it == stats.end()) throw PreconditionError("normalizer not fitted for method " + extraction::to_string(m));
  return it->second.at(dim);
}

Normalizer fit_normalizer(std::span<const scales::RawProfile> raw) {
  Normalizer norm;
  std::map<Method, std::vector<const scales::RawProfile*>> by_method;
  for (const auto& p : raw) {
    if (norm.dimensions.empty()) norm.dimensions = p.dimensions;
    if (p.dimensions != norm.dimensions) throw PairingError("profile '" + p.post_id + "' has a different dimension list");
    by_method[p.method].push_back(&p);
  }
  for (const auto& [method, list] : by_method) {
    if (list.size() < 2)
      throw EstimationError("need at least 2 profiles to normalize method " + extraction::to_string(method));
    auto& out = norm.stats[method];
    const std::size_t d = norm.dimensions.size();
    out.assign(d, {});
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> col;
      col.reserve(list.size());
      for (const auto* p : list) col.push_back(p->scores[j]);
      out[j].n = col.size();
      out[j].mean = psychometrics::mean(col);
      double ss = 0;
      for (double v : col) ss += (v - out[j].mean) * (v - out[j].mean);
      out[j].sd = std::sqrt(ss / static_cast<double>(col.size() - 1));
      out[j].degenerate = out[j].sd == 0.0;
    }
  }
  if (by_method.empty()) throw EstimationError("no profiles to normalize");
  return norm;
}

NormalizedProfile normalize(const scales::RawProfile& raw, const Normalizer& norm) {
  if (raw.dimensions != norm.dimensions) throw PairingError("profile '" + raw.post_id + "' does not match normalizer");
  NormalizedProfile out{raw.post_id, raw.method, raw.dimensions, {}, {}};
  for (std::size_t j = 0; j < raw.scores.size(); ++j) {
    const auto& s = norm.at(raw.method, j);
    out.degenerate.push_back(s.degenerate);
    out.z.push_back(s.degenerate ? 0.0 : (raw.scores[j] - s.mean) / s.sd);
  }
  return out;
}

FusedProfile fuse(const NormalizedProfile& lex, const NormalizedProfile& sem, std::string user_id,
                  std::string context_id) {
  if (lex.post_id != sem.post_id)
    throw PairingError("cannot fuse profiles of different posts: '" + lex.post_id + "' vs '" + sem.post_id + "'");
  if (lex.dimensions != sem.dimensions) throw PairingError("cannot fuse profiles with different dimensions");
  FusedProfile f{lex.post_id, std::move(user_id), std::move(context_id), lex.dimensions, {}, lex, sem};
  f.z.resize(lex.z.size());
  for (std::size_t j = 0; j < lex.z.size(); ++j) f.z[j] = 0.5 * (lex.z[j] + sem.z[j]);
  return f;
}

std::optional<double> profile_agreement(const NormalizedProfile& lex, const NormalizedProfile& sem) {
  if (lex.z.size() != sem.z.size()) throw PairingError("profiles differ in length");
  if (lex.z.size() < 2) return std::nullopt;
  return psychometrics::pearson(lex.z, sem.z);
}

}  // namespace statetrait::profiles
