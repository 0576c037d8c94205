#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace statetrait::corpus {

struct Post {
  std::string id;  ///< post_id from input, else "line-<n>"
  std::string user_id;
  std::string context_id;
  std::string text;
  std::size_t word_count = 0;
};

enum class Format { Jsonl, Csv };

/// "jsonl" or "csv"; anything else is a ConfigError.
Format parse_format(std::string_view name);
std::string to_string(Format f);

Post make_post(std::string id, std::string user_id, std::string context_id, std::string text);

/// Throws ValidationError with the offending 1-based line number.
std::vector<Post> ingest(std::istream& in, Format format);
std::vector<Post> ingest_file(const std::string& path, Format format);
std::vector<Post> ingest_string(std::string_view data, Format format);

/// Word filter first, then users with fewer than min_contexts distinct contexts are dropped.
std::vector<Post> filter_eligible(const std::vector<Post>& posts, std::size_t min_words = 50,
                                  std::size_t min_contexts = 3);

/// k posts per user from k distinct contexts: contexts are drawn first, then one
/// post per drawn context. Output keeps input order.
std::vector<Post> sample_per_user(const std::vector<Post>& posts, std::size_t k, std::uint64_t seed);

struct CorpusManifest {
  std::size_t n_posts = 0;
  std::size_t n_users = 0;
  std::size_t n_contexts = 0;
  std::size_t posts_per_user = 0;  ///< 0 when users differ in post count
  std::size_t contexts_with_10_plus = 0;
  std::size_t median_words = 0;    ///< lower median
  std::size_t min_words = 0;
  std::size_t max_words = 0;
};

CorpusManifest corpus_stats(const std::vector<Post>& posts);

std::string to_json(const CorpusManifest& m);
std::string to_jsonl(const std::vector<Post>& posts);

}  // namespace statetrait::corpus
