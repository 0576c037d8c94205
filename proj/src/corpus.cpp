#include "statetrait/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "statetrait/error.hpp"
#include "statetrait/rng.hpp"
#include "statetrait/text.hpp"

namespace statetrait::corpus {

using nlohmann::json;

Format parse_format(std::string_view name) {
  const std::string n = text::to_lower_ascii(std::string(name));
  if (n == "jsonl") return Format::Jsonl;
  if (n == "csv") return Format::Csv;
  throw ConfigError("unknown corpus format '" + std::string(name) + "'");
}

std::string to_string(Format f) { return f == Format::Jsonl ? "jsonl" : "csv"; }

Post make_post(std::string id, std::string user_id, std::string context_id, std::string text) {
  Post p{std::move(id), std::move(user_id), std::move(context_id), std::move(text), 0};
  p.word_count = text::word_count(p.text);
  return p;
}

namespace {

std::string require_field(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw ValidationError(line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ValidationError(line, std::string("field '") + key + "' is not a string");
  std::string v = it->get<std::string>();
  if (v.empty() && std::string_view(key) != "text")
    throw ValidationError(line, std::string("field '") + key + "' is empty");
  return v;
}

std::vector<Post> ingest_jsonl(std::istream& in) {
  std::vector<Post> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(n, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ValidationError(n, "record is not an object");
    std::string id = "line-" + std::to_string(n);
    if (auto it = obj.find("post_id"); it != obj.end() && it->is_string() && !it->get<std::string>().empty())
      id = it->get<std::string>();
    out.push_back(make_post(std::move(id), require_field(obj, "user_id", n), require_field(obj, "context_id", n),
                            require_field(obj, "text", n)));
  }
  return out;
}

// RFC 4180 records; quoted fields may span lines. Returns false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  int c = in.peek();
  if (c == EOF) return false;
  ++line;
  std::string field;
  bool quoted = false, was_quoted = false;
  while (true) {
    c = in.get();
    if (c == EOF) {
      if (quoted) throw ValidationError(line, "unterminated quoted field");
      break;
    }
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        if (ch == '\n') ++line;
        field += ch;
      }
      continue;
    }
    if (ch == '"' && field.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (ch == '\n') {
      break;
    } else if (ch != '\r') {
      field += ch;
    }
  }
  fields.push_back(std::move(field));
  return true;
}

std::vector<Post> ingest_csv(std::istream& in) {
  std::vector<Post> out;
  std::vector<std::string> header, rec;
  std::size_t line = 0;
  if (!read_csv_record(in, header, line)) return out;
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[text::trim(header[i])] = i;
  for (const char* k : {"user_id", "context_id", "text"})
    if (!col.count(k)) throw ValidationError(1, std::string("header lacks column '") + k + "'");
  const auto pid = col.find("post_id");
  while (true) {
    const std::size_t start = line + 1;
    if (!read_csv_record(in, rec, line)) break;
    if (rec.size() == 1 && text::trim(rec[0]).empty()) continue;
    if (rec.size() != header.size())
      throw ValidationError(start, "expected " + std::to_string(header.size()) + " fields, got " +
                                       std::to_string(rec.size()));
    auto get = [&](const char* k) {
      std::string v = rec[col.at(k)];
      if (v.empty() && std::string_view(k) != "text") throw ValidationError(start, std::string("field '") + k + "' is empty");
      return v;
    };
    std::string id = "line-" + std::to_string(start);
    if (pid != col.end() && !rec[pid->second].empty()) id = rec[pid->second];
    out.push_back(make_post(std::move(id), get("user_id"), get("context_id"), get("text")));
  }
  return out;
}

}  // namespace

std::vector<Post> ingest(std::istream& in, Format format) {
  return format == Format::Jsonl ? ingest_jsonl(in) : ingest_csv(in);
}

std::vector<Post> ingest_file(const std::string& path, Format format) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open corpus file '" + path + "'");
  return ingest(f, format);
}

std::vector<Post> ingest_string(std::string_view data, Format format) {
  std::istringstream s{std::string(data)};
  return ingest(s, format);
}

std::vector<Post> filter_eligible(const std::vector<Post>& posts, std::size_t min_words, std::size_t min_contexts) {
  if (min_words < 1 || min_contexts < 1) throw PreconditionError("min_words and min_contexts must be >= 1");
  std::vector<const Post*> long_enough;
  std::unordered_map<std::string, std::set<std::string>> contexts;
  for (const auto& p : posts) {
    if (p.word_count < min_words) continue;
    long_enough.push_back(&p);
    contexts[p.user_id].insert(p.context_id);
  }
  std::vector<Post> out;
  for (const Post* p : long_enough)
    if (contexts[p->user_id].size() >= min_contexts) out.push_back(*p);
  return out;
}

std::vector<Post> sample_per_user(const std::vector<Post>& posts, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw PreconditionError("k must be >= 1");
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> by_user;
  for (std::size_t i = 0; i < posts.size(); ++i) by_user[posts[i].user_id][posts[i].context_id].push_back(i);

  std::vector<std::size_t> chosen;
  for (const auto& [user, ctx] : by_user) {
    if (ctx.size() < k)
      throw PreconditionError("user '" + user + "' has " + std::to_string(ctx.size()) + " distinct contexts, need " +
                              std::to_string(k));
    Rng rng(text::mix64(seed ^ text::fnv1a64(user)));
    std::vector<const std::vector<std::size_t>*> pool;
    for (const auto& [c, idx] : ctx) pool.push_back(&idx);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = j + static_cast<std::size_t>(rng.below(pool.size() - j));
      std::swap(pool[j], pool[r]);
      const auto& idx = *pool[j];
      chosen.push_back(idx[static_cast<std::size_t>(rng.below(idx.size()))]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Post> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(posts[i]);
  return out;
}

CorpusManifest corpus_stats(const std::vector<Post>& posts) {
  CorpusManifest m;
  if (posts.empty()) return m;
  std::map<std::string, std::size_t> users, contexts;
  std::vector<std::size_t> words;
  for (const auto& p : posts) {
    ++users[p.user_id];
    ++contexts[p.context_id];
    words.push_back(p.word_count);
  }
  m.n_posts = posts.size();
  m.n_users = users.size();
  m.n_contexts = contexts.size();
  const std::size_t first = users.begin()->second;
  m.posts_per_user = std::all_of(users.begin(), users.end(), [&](const auto& u) { return u.second == first; }) ? first : 0;
  m.contexts_with_10_plus = static_cast<std::size_t>(
      std::count_if(contexts.begin(), contexts.end(), [](const auto& c) { return c.second >= 10; }));
  std::sort(words.begin(), words.end());
  m.median_words = words[(words.size() - 1) / 2];
  m.min_words = words.front();
  m.max_words = words.back();
  return m;
}

std::string to_json(const CorpusManifest& m) {
  json j = {{"n_posts", m.n_posts},
            {"n_users", m.n_users},
            {"n_contexts", m.n_contexts},
            {"posts_per_user", m.posts_per_user},
            {"contexts_with_10_plus", m.contexts_with_10_plus},
            {"median_words", m.median_words},
            {"word_range", {m.min_words, m.max_words}}};
  return j.dump(2) + "\n";
}

std::string to_jsonl(const std::vector<Post>& posts) {
  std::string out;
  for (const auto& p : posts) {
    json j = {{"post_id", p.id}, {"user_id", p.user_id}, {"context_id", p.context_id}, {"text", p.text}};
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace statetrait::corpus
