#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "statetrait/error.hpp"
#include "statetrait/providers.hpp"
#include "statetrait/text.hpp"

using namespace statetrait;
using namespace statetrait::providers;

namespace {

RetryPolicy no_sleep(int attempts = 3) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.sleep = nullptr;
  return p;
}

class FlakyProvider : public CompletionProvider {
 public:
  FlakyProvider(int failures, std::string payload) : failures_(failures), payload_(std::move(payload)) {}
  std::string complete(const CompletionRequest&) override {
    if (calls_++ < failures_) throw RetryableError("timeout");
    return payload_;
  }
  std::string model_id() const override { return "flaky"; }
  int calls() const { return calls_; }

 private:
  int failures_;
  int calls_ = 0;
  std::string payload_;
};

}  // namespace

TEST_CASE("template mock is deterministic") {
  TemplateCompletionMock m(7);
  CompletionRequest r{"", "What do you think about saving money?", "", 0.0, ""};
  CHECK(m.complete(r) == m.complete(r));
  TemplateCompletionMock other(7);
  CHECK(other.complete(r) == m.complete(r));
  CompletionRequest sys = r;
  sys.system_text = "You are a person with the following characteristics: X.";
  CHECK(m.complete(sys) != m.complete(r));
}

TEST_CASE("requests are validated") {
  TemplateCompletionMock m(1);
  CHECK_THROWS_AS(m.complete(CompletionRequest{"", "  ", "", 0.0, ""}), PreconditionError);
  CHECK_THROWS_AS(m.complete(CompletionRequest{"", "q", "", 2.5, ""}), PreconditionError);
}

TEST_CASE("structured completion: canned valid document") {
  ScriptedCompletionMock m({"```json\n{\"patterns\": []}\n```"});
  auto doc = complete_structured(m, {"", "go", "x", 0, ""}, [](const nlohmann::json& d) -> std::optional<std::string> {
    if (!d.contains("patterns")) return "missing patterns";
    return std::nullopt;
  });
  CHECK(doc["patterns"].empty());
  CHECK(m.calls() == 1);
}

TEST_CASE("structured completion: one repair then failure") {
  ScriptedCompletionMock m({"{\"bad\": 1}"});
  auto validator = [](const nlohmann::json& d) -> std::optional<std::string> {
    if (!d.contains("patterns")) return "missing patterns";
    return std::nullopt;
  };
  CHECK_THROWS_AS(complete_structured(m, {"", "go", "x", 0, ""}, validator), ExtractionError);
  CHECK(m.calls() == 2);
  const auto reqs = m.requests();
  CHECK(reqs[1].user_text.find("missing patterns") != std::string::npos);

  ScriptedCompletionMock fixed({"not json at all", "{\"patterns\": [1]}"});
  CHECK(complete_structured(fixed, {"", "go", "x", 0, ""}, validator)["patterns"].size() == 1);
}

TEST_CASE("retry: transient failures are absorbed without changing the payload") {
  FlakyProvider p(2, "{\"ok\": true}");
  std::vector<std::chrono::milliseconds> delays;
  RetryPolicy policy;
  policy.max_attempts = 3;
  policy.base_delay = std::chrono::milliseconds(10);
  policy.sleep = [&](std::chrono::milliseconds d) { delays.push_back(d); };
  const auto out = with_retry(policy, [&] { return p.complete({"", "q", "", 0, ""}); });
  CHECK(out == "{\"ok\": true}");
  REQUIRE(delays.size() == 2);
  CHECK(delays[0].count() == 10);
  CHECK(delays[1].count() == 20);

  FlakyProvider dead(5, "x");
  CHECK_THROWS_AS(with_retry(no_sleep(3), [&] { return dead.complete({"", "q", "", 0, ""}); }), RetryableError);
  CHECK(dead.calls() == 3);
}

TEST_CASE("embedder: identity, symmetry, order-insensitivity") {
  HashedBowEmbedder e;
  const auto a = e.embed("the cat sat on the mat");
  const auto b = e.embed("mat the on sat cat the");
  CHECK(a.size() == kDefaultEmbeddingDim);
  double n = 0;
  for (double x : a) n += x * x;
  CHECK(std::fabs(std::sqrt(n) - 1.0) < 1e-6);
  CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a == b);
  const auto c = e.embed("a completely different sentence");
  CHECK(cosine(a, c) == cosine(c, a));
  CHECK_THROWS_AS(e.embed(""), PreconditionError);
  CHECK_THROWS_AS(e.embed(" ... "), PreconditionError);
}

TEST_CASE("embedder: disjoint vocabularies give zero cosine") {
  HashedBowEmbedder e;
  // Oracle: pick token sets whose hash buckets do not intersect.
  auto bucket = [](const std::string& t) { return text::fnv1a64(t) % kDefaultEmbeddingDim; };
  const std::vector<std::string> left{"apple", "river", "stone"};
  std::vector<std::string> right;
  std::set<std::uint64_t> used;
  for (const auto& t : left) used.insert(bucket(t));
  for (const char* cand : {"violin", "orbit", "candle", "harbor", "meadow", "quartz"})
    if (!used.count(bucket(cand)) && right.size() < 3) right.push_back(cand);
  REQUIRE(right.size() == 3);
  const auto a = e.embed(left[0] + " " + left[1] + " " + left[2]);
  const auto b = e.embed(right[0] + " " + right[1] + " " + right[2]);
  CHECK(cosine(a, b) == 0.0);
}

TEST_CASE("reward mocks") {
  RewardMock blind("blind", 3);
  const auto s0 = blind.score("Is it ok?", "Yes, mostly.", std::nullopt);
  const auto s1 = blind.score("Is it ok?", "Yes, mostly.", std::string("CARD"));
  CHECK(s0.value == s1.value);
  RewardMock biased("biased", 3, 1.0);
  const auto b0 = biased.score("Is it ok?", "Yes, mostly.", std::nullopt);
  const auto b1 = biased.score("Is it ok?", "Yes, mostly.", std::string("CARD"));
  CHECK(b1.value - b0.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(b0.value == s0.value);
  CHECK_THROWS_AS(blind.score("q", "", std::nullopt), PreconditionError);
}

TEST_CASE("reward input template") {
  CHECK(format_reward_input("Q", "R", std::nullopt) == "User: Q\n\nAssistant: R");
  CHECK(format_reward_input("Q", "R", std::string("CARD")) ==
        "The user has this psychological profile: CARD\nUser: Q\n\nAssistant: R");
}

TEST_CASE("echo mock returns the tag") {
  EchoCompletionMock m;
  CHECK(m.complete({"sys", "question", "", 0, "Driven-Assertive"}) == "Driven-Assertive");
  CHECK(m.complete({"", "question", "", 0, ""}) == "question");
}

TEST_CASE("parallel_map preserves order and surfaces errors") {
  for (std::size_t par : {1u, 3u, 8u}) {
    auto out = parallel_map<std::size_t>(100, par, [](std::size_t i) { return i * i; });
    REQUIRE(out.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) CHECK(out[i] == i * i);
  }
  CHECK_THROWS_AS(parallel_map<int>(10, 4,
                                    [](std::size_t i) -> int {
                                      if (i == 5) throw RetryableError("boom");
                                      return 0;
                                    }),
                  RetryableError);
}

TEST_CASE("json payload extraction") {
  CHECK(parse_json_payload("{\"a\":1}")->at("a") == 1);
  CHECK(parse_json_payload("Sure! Here it is: {\"a\": 2} hope it helps")->at("a") == 2);
  CHECK_FALSE(parse_json_payload("no json").has_value());
}

TEST_CASE("http providers need a credential") {
  HttpConfig c{"http://127.0.0.1:9", "m", "STATETRAIT_TEST_UNSET_VARIABLE", 1};
  auto p = make_http_completion(c);
  CHECK_THROWS_AS(p->complete({"", "hello", "", 0, ""}), ConfigError);
  HttpConfig bad{"no-scheme", "m", "PATH", 1};
  CHECK_THROWS_AS(make_http_reward(bad)->score("q", "r", std::nullopt), ConfigError);
}
