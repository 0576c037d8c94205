#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "statetrait/providers.hpp"

namespace statetrait::providers {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("base URL lacks a scheme: '" + url + "'");
  const auto path = url.find('/', scheme + 3);
  Endpoint e{url.substr(0, path), path == std::string::npos ? "" : url.substr(path)};
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

std::string credential(const HttpConfig& c) {
  const char* v = std::getenv(c.credential_env.c_str());
  if (!v || !*v) throw ConfigError("credential environment variable '" + c.credential_env + "' is not set");
  return v;
}

json post_json(const HttpConfig& c, const std::string& route, const json& body) {
  const Endpoint e = split_url(c.base_url);
  httplib::Client cli(e.origin);
  cli.set_connection_timeout(c.timeout_seconds);
  cli.set_read_timeout(c.timeout_seconds);
  httplib::Headers headers{{"Authorization", "Bearer " + credential(c)}};
  auto res = cli.Post(e.prefix + route, headers, body.dump(), "application/json");
  if (!res) throw RetryableError("transport failure to " + e.origin + ": " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw RetryableError("HTTP " + std::to_string(res->status) + " from " + e.origin);
  if (res->status >= 400) throw Error("HTTP " + std::to_string(res->status) + " from " + e.origin + ": " + res->body);
  auto doc = json::parse(res->body, nullptr, false);
  if (doc.is_discarded()) throw RetryableError("non-JSON body from " + e.origin);
  return doc;
}

class HttpCompletion : public CompletionProvider {
 public:
  explicit HttpCompletion(HttpConfig c) : c_(std::move(c)) {}
  std::string complete(const CompletionRequest& r) override {
    validate(r);
    json messages = json::array();
    if (!r.system_text.empty()) messages.push_back({{"role", "system"}, {"content", r.system_text}});
    messages.push_back({{"role", "user"}, {"content", r.user_text}});
    json body = {{"model", c_.model}, {"messages", messages}, {"temperature", r.temperature}};
    if (!r.schema_id.empty()) body["response_format"] = {{"type", "json_object"}};
    const json doc = post_json(c_, "/chat/completions", body);
    try {
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw RetryableError("unexpected completion payload");
    }
  }
  std::string model_id() const override { return c_.model; }

 private:
  HttpConfig c_;
};

class HttpEmbedding : public EmbeddingProvider {
 public:
  HttpEmbedding(HttpConfig c, std::size_t dim) : c_(std::move(c)), dim_(dim) {}
  std::vector<double> embed(std::string_view text) override {
    if (text.empty()) throw PreconditionError("cannot embed empty text");
    const json doc = post_json(c_, "/embeddings", {{"model", c_.model}, {"input", std::string(text)}});
    std::vector<double> v;
    try {
      v = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw RetryableError("unexpected embedding payload");
    }
    if (v.size() != dim_)
      throw ConfigError("embedding dimension " + std::to_string(v.size()) + " != configured " + std::to_string(dim_));
    double n = 0;
    for (double x : v) {
      if (!std::isfinite(x)) throw RetryableError("non-finite embedding value");
      n += x * x;
    }
    n = std::sqrt(n);
    if (n == 0) throw RetryableError("zero embedding");
    for (double& x : v) x /= n;
    return v;
  }
  std::size_t dimension() const override { return dim_; }

 private:
  HttpConfig c_;
  std::size_t dim_;
};

class HttpReward : public RewardProvider {
 public:
  explicit HttpReward(HttpConfig c) : c_(std::move(c)) {}
  RewardScore score(const std::string& q, const std::string& r, const std::optional<std::string>& prefix) override {
    if (q.empty() || r.empty()) throw PreconditionError("reward scoring needs a question and a response");
    const json doc = post_json(c_, "/score", {{"model", c_.model}, {"text", format_reward_input(q, r, prefix)}});
    const auto it = doc.find("score");
    if (it == doc.end() || !it->is_number() || !std::isfinite(it->get<double>()))
      throw RetryableError("unexpected reward payload");
    return {it->get<double>(), c_.model};
  }
  std::string model_id() const override { return c_.model; }

 private:
  HttpConfig c_;
};

}  // namespace

std::unique_ptr<CompletionProvider> make_http_completion(const HttpConfig& c) {
  return std::make_unique<HttpCompletion>(c);
}
std::unique_ptr<EmbeddingProvider> make_http_embedding(const HttpConfig& c, std::size_t dim) {
  return std::make_unique<HttpEmbedding>(c, dim);
}
std::unique_ptr<RewardProvider> make_http_reward(const HttpConfig& c) { return std::make_unique<HttpReward>(c); }

}  // namespace statetrait::providers
