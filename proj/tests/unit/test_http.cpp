#include <doctest.h>

#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "statetrait/error.hpp"
#include "statetrait/providers.hpp"

using namespace statetrait;
using namespace statetrait::providers;
using nlohmann::json;

namespace {

struct Loopback {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mu;
  std::vector<json> bodies;
  std::vector<std::string> auth;

  Loopback() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      const json body = json::parse(req.body);
      const std::string user = body["messages"].back()["content"];
      if (user == "boom") {
        res.status = 503;
        return;
      }
      if (user == "bad") {
        res.status = 400;
        res.set_content("{\"error\":\"bad request\"}", "application/json");
        return;
      }
      res.set_content(json{{"choices", {{{"message", {{"content", "echo:" + user}}}}}}}.dump(), "application/json");
    });
    server.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      res.set_content(json{{"data", {{{"embedding", {3.0, 4.0}}}}}}.dump(), "application/json");
    });
    server.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      record(req);
      const std::string text = json::parse(req.body)["text"];
      res.set_content(json{{"score", static_cast<double>(text.size())}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Loopback() {
    server.stop();
    thread.join();
  }
  void record(const httplib::Request& req) {
    std::lock_guard lock(mu);
    bodies.push_back(json::parse(req.body));
    auth.push_back(req.get_header_value("Authorization"));
  }
  HttpConfig config(const std::string& model) {
    return {"http://127.0.0.1:" + std::to_string(port) + "/v1/", model, "STATETRAIT_HTTP_TEST_KEY", 5};
  }
};

}  // namespace

TEST_CASE("http providers against a loopback server") {
  ::setenv("STATETRAIT_HTTP_TEST_KEY", "secret-token", 1);
  Loopback lb;

  auto chat = make_http_completion(lb.config("chat-model"));
  CompletionRequest req{"be brief", "hello", "", 0.0, "ignored-tag"};
  CHECK(chat->complete(req) == "echo:hello");
  CHECK(chat->model_id() == "chat-model");
  {
    std::lock_guard lock(lb.mu);
    const json& b = lb.bodies.back();
    CHECK(b["model"] == "chat-model");
    CHECK(b["temperature"] == 0.0);
    CHECK(b["messages"].size() == 2);
    CHECK(b["messages"][0]["role"] == "system");
    CHECK(b.dump().find("ignored-tag") == std::string::npos);
    CHECK(lb.auth.back() == "Bearer secret-token");
  }
  req.user_text = "boom";
  CHECK_THROWS_AS(chat->complete(req), RetryableError);
  req.user_text = "bad";
  try {
    chat->complete(req);
    FAIL("expected an error");
  } catch (const RetryableError&) {
    FAIL("4xx must not be retryable");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("400") != std::string::npos);
  }

  auto emb = make_http_embedding(lb.config("emb"), 2);
  const auto v = emb->embed("anything");
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(make_http_embedding(lb.config("emb"), 3)->embed("x"), ConfigError);

  auto rm = make_http_reward(lb.config("rm"));
  const auto plain = rm->score("Q", "R", std::nullopt);
  CHECK(plain.value == static_cast<double>(format_reward_input("Q", "R", std::nullopt).size()));
  CHECK(plain.model_id == "rm");
  const auto with_card = rm->score("Q", "R", std::string("CARD"));
  CHECK(with_card.value == static_cast<double>(format_reward_input("Q", "R", std::string("CARD")).size()));
}
