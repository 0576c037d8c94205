#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "statetrait/error.hpp"

namespace statetrait::providers {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;
inline constexpr const char* kDefaultCredentialEnv = "STATETRAIT_API_KEY";

struct CompletionRequest {
  std::string system_text;  ///< empty means no system turn
  std::string user_text;
  std::string schema_id;    ///< empty means free text
  double temperature = 0.0;
  /// Caller-side label (e.g. the grid condition). Not sent over the wire.
  std::string tag;
};

/// Throws PreconditionError on empty user text or temperature outside [0, 2].
void validate(const CompletionRequest& r);

std::uint64_t request_hash(const CompletionRequest& r, std::uint64_t seed);

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Unit-norm vector of dimension(). Empty text is a PreconditionError.
  virtual std::vector<double> embed(std::string_view text) = 0;
  virtual std::size_t dimension() const = 0;
};

struct RewardScore {
  double value = 0.0;
  std::string model_id;
};

class RewardProvider {
 public:
  virtual ~RewardProvider() = default;
  virtual RewardScore score(const std::string& question, const std::string& response,
                            const std::optional<std::string>& profile_prefix) = 0;
  virtual std::string model_id() const = 0;
};

/// Text handed to a reward model, with the optional profile line in front.
std::string format_reward_input(const std::string& question, const std::string& response,
                                const std::optional<std::string>& profile_prefix);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Retry and structured output

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{200};
  double multiplier = 2.0;
  /// Replaced in tests to avoid real sleeping.
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

/// Calls fn, retrying on RetryableError with exponential backoff. The last
/// RetryableError propagates once attempts are exhausted.
template <class Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto delay = policy.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const RetryableError&) {
      if (attempt >= policy.max_attempts) throw;
      if (policy.sleep) policy.sleep(delay);
      delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier));
    }
  }
}

/// Returns an error message, or nullopt when the document is acceptable.
using DocumentValidator = std::function<std::optional<std::string>(const nlohmann::json&)>;

/// Completes, parses JSON (fenced blocks are unwrapped) and validates. One repair
/// re-prompt carrying the validation error; a second failure throws ExtractionError.
nlohmann::json complete_structured(CompletionProvider& provider, const CompletionRequest& request,
                                   const DocumentValidator& validator, const RetryPolicy& retry = {},
                                   int max_repairs = 1);

/// Parses a completion as JSON, tolerating ```json fences and surrounding prose.
std::optional<nlohmann::json> parse_json_payload(std::string_view text);

// ---------------------------------------------------------------------------
// Concurrency

/// fn(i) for i in [0, n) on up to `parallelism` threads; results in index order.
/// The first exception by index is rethrown after all work stops.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t parallelism, Fn&& fn) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(parallelism, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Mocks

/// Seeded template filler keyed by the request hash.
class TemplateCompletionMock : public CompletionProvider {
 public:
  explicit TemplateCompletionMock(std::uint64_t seed, std::string model = "mock-template");
  std::string complete(const CompletionRequest& request) override;
  std::string model_id() const override { return model_; }

 private:
  std::uint64_t seed_;
  std::string model_;
};

/// Returns scripted outputs in order; the last one repeats.
class ScriptedCompletionMock : public CompletionProvider {
 public:
  explicit ScriptedCompletionMock(std::vector<std::string> outputs, std::string model = "mock-scripted");
  std::string complete(const CompletionRequest& request) override;
  std::string model_id() const override { return model_; }
  std::size_t calls() const;
  std::vector<CompletionRequest> requests() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> outputs_;
  std::vector<CompletionRequest> seen_;
  std::string model_;
};

/// Returns the request tag when set, else the user text.
class EchoCompletionMock : public CompletionProvider {
 public:
  explicit EchoCompletionMock(std::string model = "mock-echo") : model_(std::move(model)) {}
  std::string complete(const CompletionRequest& request) override;
  std::string model_id() const override { return model_; }

 private:
  std::string model_;
};

/// Answers scale-assessment prompts. Items are read from lines of the form
/// "- <id> [<min> to <max>]: <text>" and scored from a hash of the feature block.
class ScaleAssessmentMock : public CompletionProvider {
 public:
  enum class Mode { Hashed, Midpoint, Constant };
  explicit ScaleAssessmentMock(std::uint64_t seed, Mode mode = Mode::Hashed, double constant = 0.0,
                               std::string model = "mock-scales");
  std::string complete(const CompletionRequest& request) override;
  std::string model_id() const override { return model_; }

 private:
  std::uint64_t seed_;
  Mode mode_;
  double constant_;
  std::string model_;
};

/// Produces pattern documents quoting spans of the analysed text.
class SemanticPatternMock : public CompletionProvider {
 public:
  explicit SemanticPatternMock(std::uint64_t seed, std::string model = "mock-patterns");
  std::string complete(const CompletionRequest& request) override;
  std::string model_id() const override { return model_; }

 private:
  std::uint64_t seed_;
  std::string model_;
};

/// Hashed bag-of-words counts, L2-normalized.
class HashedBowEmbedder : public EmbeddingProvider {
 public:
  explicit HashedBowEmbedder(std::size_t dimension = kDefaultEmbeddingDim, std::uint64_t seed = 0);
  std::vector<double> embed(std::string_view text) override;
  std::size_t dimension() const override { return dim_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Score depends on (question, response) only, plus `delta` when a profile is present.
/// With card_scale != 0 the bonus also varies with a hash of the card text.
class RewardMock : public RewardProvider {
 public:
  RewardMock(std::string model, std::uint64_t seed, double delta = 0.0, double card_scale = 0.0);
  RewardScore score(const std::string& question, const std::string& response,
                    const std::optional<std::string>& profile_prefix) override;
  std::string model_id() const override { return model_; }

 private:
  std::string model_;
  std::uint64_t seed_;
  double delta_;
  double card_scale_;
};

// ---------------------------------------------------------------------------
// Live HTTP transport

struct HttpConfig {
  std::string base_url;  ///< e.g. https://api.example.com/v1
  std::string model;
  std::string credential_env = kDefaultCredentialEnv;
  int timeout_seconds = 60;
};

/// Chat-completions style endpoint: POST {base}/chat/completions.
std::unique_ptr<CompletionProvider> make_http_completion(const HttpConfig& config);
/// POST {base}/embeddings; the returned vector is renormalized to unit length.
std::unique_ptr<EmbeddingProvider> make_http_embedding(const HttpConfig& config, std::size_t dimension);
/// POST {base}/score with {"model", "text"}; expects {"score": number}.
std::unique_ptr<RewardProvider> make_http_reward(const HttpConfig& config);

}  // namespace statetrait::providers
