#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statetrait/extraction.hpp"
#include "statetrait/scales.hpp"

namespace statetrait::profiles {

using extraction::Method;

struct DimensionStats {
  double mean = 0.0;
  double sd = 0.0;  ///< sample (n - 1)
  std::size_t n = 0;
  bool degenerate = false;  ///< sd == 0
};

struct Normalizer {
  std::vector<std::string> dimensions;
  std::map<Method, std::vector<DimensionStats>> stats;

  const DimensionStats& at(Method m, std::size_t dim) const;
};

/// Per-method, per-dimension mean and sample SD. Fewer than 2 profiles for a
/// method raises EstimationError; mismatched dimension lists raise PairingError.
Normalizer fit_normalizer(std::span<const scales::RawProfile> raw);

struct NormalizedProfile {
  std::string post_id;
  Method method = Method::Lex;
  std::vector<std::string> dimensions;
  std::vector<double> z;
  std::vector<bool> degenerate;
};

NormalizedProfile normalize(const scales::RawProfile& raw, const Normalizer& norm);

struct FusedProfile {
  std::string post_id;
  std::string user_id;
  std::string context_id;
  std::vector<std::string> dimensions;
  std::vector<double> z;
  NormalizedProfile lex;
  NormalizedProfile sem;
};

/// Element-wise mean. Different post ids or dimension lists raise PairingError.
FusedProfile fuse(const NormalizedProfile& lex, const NormalizedProfile& sem, std::string user_id = {},
                  std::string context_id = {});

/// Pearson r across dimensions; nullopt when either profile is constant.
std::optional<double> profile_agreement(const NormalizedProfile& lex, const NormalizedProfile& sem);

}  // namespace statetrait::profiles
