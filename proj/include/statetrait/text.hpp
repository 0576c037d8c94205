#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace statetrait::text {

/// Splits on Unicode whitespace (UTF-8). Tokens are returned verbatim.
std::vector<std::string_view> split_whitespace(std::string_view s);

/// Number of whitespace-delimited tokens.
std::size_t word_count(std::string_view s);

/// Lexical tokens: whitespace split, leading/trailing ASCII punctuation stripped,
/// ASCII lowercased. Tokens that are pure punctuation are dropped.
std::vector<std::string> lexical_tokens(std::string_view s);

std::string to_lower_ascii(std::string_view s);

std::string trim(std::string_view s);

/// 64-bit FNV-1a. Stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0);

/// SplitMix64 finalizer; used to derive independent streams from a seed.
std::uint64_t mix64(std::uint64_t x);

/// Fixed-point decimal rendering ("%.{digits}f"), with -0 normalized to 0.
std::string fixed(double v, int digits);

std::string hex64(std::uint64_t v);

}  // namespace statetrait::text
