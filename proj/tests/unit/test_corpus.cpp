#include <doctest.h>

#include <map>
#include <set>
#include <string>

#include "statetrait/corpus.hpp"
#include "statetrait/error.hpp"

using namespace statetrait;
using namespace statetrait::corpus;

namespace {

std::string words(std::size_t n, const std::string& w = "word") {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + w;
  return s;
}

Post post(const std::string& u, const std::string& c, std::size_t n, const std::string& id = "") {
  return make_post(id.empty() ? u + "-" + c : id, u, c, words(n));
}

}  // namespace

TEST_CASE("ingest: empty stream") {
  CHECK(ingest_string("", Format::Jsonl).empty());
  CHECK(ingest_string("", Format::Csv).empty());
}

TEST_CASE("ingest: one JSONL record") {
  const auto posts = ingest_string(
      R"({"user_id":"u1","context_id":"AskReddit","text":"The quick brown fox jumps over the lazy dog near the river","created_at":"x"})",
      Format::Jsonl);
  REQUIRE(posts.size() == 1);
  CHECK(posts[0].word_count == 12);
  CHECK(posts[0].id == "line-1");
  CHECK(posts[0].context_id == "AskReddit");
}

TEST_CASE("ingest: missing context_id reports the line") {
  const std::string data =
      "{\"user_id\":\"u1\",\"context_id\":\"a\",\"text\":\"hi there\"}\n"
      "{\"user_id\":\"u2\",\"text\":\"no context\"}\n";
  try {
    ingest_string(data, Format::Jsonl);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(ingest_string("{not json}\n", Format::Jsonl), ValidationError);
}

TEST_CASE("ingest: csv with quoted fields") {
  const std::string data =
      "post_id,user_id,context_id,text\n"
      "p1,u1,AskReddit,\"hello, world \"\"quoted\"\"\nsecond line\"\n"
      "p2,u2,depression,plain text here\n";
  const auto posts = ingest_string(data, Format::Csv);
  REQUIRE(posts.size() == 2);
  CHECK(posts[0].text == "hello, world \"quoted\"\nsecond line");
  CHECK(posts[0].word_count == 5);
  CHECK(posts[1].id == "p2");
  CHECK_THROWS_AS(ingest_string("user_id,text\nu,t\n", Format::Csv), ValidationError);
  try {
    ingest_string("user_id,context_id,text\nu1,a,t\nu2,,t\n", Format::Csv);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("ingest: unknown format") { CHECK_THROWS_AS(parse_format("xml"), ConfigError); }

TEST_CASE("ingest: jsonl and csv agree") {
  const auto a = ingest_string(
      "{\"post_id\":\"x\",\"user_id\":\"u\",\"context_id\":\"c\",\"text\":\"a b c\"}\n", Format::Jsonl);
  const auto b = ingest_string("post_id,user_id,context_id,text\nx,u,c,a b c\n", Format::Csv);
  CHECK(a[0].id == b[0].id);
  CHECK(a[0].text == b[0].text);
  CHECK(a[0].word_count == b[0].word_count);
}

TEST_CASE("filter_eligible: word and context rules") {
  std::vector<Post> posts{post("a", "c1", 49), post("a", "c2", 50), post("a", "c3", 60), post("a", "c4", 70),
                          post("b", "c1", 80), post("b", "c2", 80), post("b", "c2", 90, "b-dup"),
                          post("c", "c1", 50), post("c", "c2", 50), post("c", "c3", 50)};
  const auto kept = filter_eligible(posts);
  std::set<std::string> ids;
  for (const auto& p : kept) ids.insert(p.id);
  CHECK_FALSE(ids.count("a-c1"));
  CHECK(ids.count("a-c2"));
  CHECK_FALSE(ids.count("b-c1"));
  CHECK(ids.count("c-c1"));
  CHECK(kept.size() == 6);
}

TEST_CASE("filter_eligible: short posts cannot satisfy the context count") {
  std::vector<Post> posts{post("a", "c1", 60), post("a", "c2", 60), post("a", "c3", 10)};
  CHECK(filter_eligible(posts).empty());
}

TEST_CASE("filter_eligible is idempotent") {
  std::vector<Post> posts;
  for (int u = 0; u < 20; ++u)
    for (int c = 0; c < 5; ++c)
      posts.push_back(post("u" + std::to_string(u), "c" + std::to_string((u + c * c) % 6),
                           static_cast<std::size_t>(30 + (u * 7 + c * 13) % 40), std::to_string(u) + "_" + std::to_string(c)));
  const auto once = filter_eligible(posts);
  const auto twice = filter_eligible(once);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i].id == twice[i].id);
}

TEST_CASE("sample_per_user: forced selection") {
  std::vector<Post> posts{post("a", "c1", 60), post("a", "c2", 60), post("a", "c3", 60)};
  const auto s = sample_per_user(posts, 3, 1);
  CHECK(s.size() == 3);
}

TEST_CASE("sample_per_user: distinct contexts and reproducibility") {
  std::vector<Post> posts{post("a", "c1", 60, "1"), post("a", "c1", 60, "2"), post("a", "c2", 60, "3"),
                          post("a", "c3", 60, "4"), post("a", "c4", 60, "5"), post("a", "c4", 60, "6")};
  const auto s1 = sample_per_user(posts, 3, 42);
  const auto s2 = sample_per_user(posts, 3, 42);
  REQUIRE(s1.size() == 3);
  std::set<std::string> ctx;
  for (std::size_t i = 0; i < 3; ++i) {
    ctx.insert(s1[i].context_id);
    CHECK(s1[i].id == s2[i].id);
  }
  CHECK(ctx.size() == 3);
  // Different seeds eventually choose different subsets.
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::string key;
    for (const auto& p : sample_per_user(posts, 3, seed)) key += p.id;
    seen.insert(key);
  }
  CHECK(seen.size() > 1);
}

TEST_CASE("sample_per_user: too few contexts") {
  std::vector<Post> posts{post("a", "c1", 60, "1"), post("a", "c1", 60, "2"), post("a", "c2", 60, "3")};
  try {
    sample_per_user(posts, 3, 1);
    FAIL("expected PreconditionError");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }
}

TEST_CASE("sample_per_user: every user gets exactly k posts in k contexts") {
  std::vector<Post> posts;
  for (int u = 0; u < 30; ++u)
    for (int c = 0; c < 3 + u % 4; ++c)
      for (int r = 0; r <= c % 2; ++r)
        posts.push_back(post("u" + std::to_string(u), "c" + std::to_string(c), 60,
                             std::to_string(u) + "/" + std::to_string(c) + "/" + std::to_string(r)));
  const auto s = sample_per_user(posts, 3, 9);
  std::map<std::string, std::set<std::string>> ctx;
  std::map<std::string, int> count;
  for (const auto& p : s) {
    ctx[p.user_id].insert(p.context_id);
    ++count[p.user_id];
  }
  CHECK(count.size() == 30);
  for (const auto& [u, n] : count) {
    CHECK(n == 3);
    CHECK(ctx[u].size() == 3);
  }
  const auto m = corpus_stats(s);
  CHECK(m.n_posts == m.n_users * m.posts_per_user);
}

TEST_CASE("corpus_stats") {
  CHECK(corpus_stats({}).n_posts == 0);
  CHECK(corpus_stats({}).median_words == 0);
  std::vector<Post> posts{post("a", "c1", 10), post("a", "c2", 20), post("a", "c3", 30),
                          post("b", "c1", 40), post("b", "c2", 50), post("b", "c4", 60)};
  const auto m = corpus_stats(posts);
  CHECK(m.n_posts == 6);
  CHECK(m.n_users == 2);
  CHECK(m.posts_per_user == 3);
  CHECK(m.n_contexts == 4);
  CHECK(m.median_words == 30);
  CHECK(m.min_words == 10);
  CHECK(m.max_words == 60);
}
