#pragma once

#include <optional>
#include <string_view>
#include <utility>

// Data files compiled into the library (registry, thresholds, lexicon, question fixtures).
namespace statetrait::embedded {

std::optional<std::string_view> lookup(std::string_view key);

}  // namespace statetrait::embedded
