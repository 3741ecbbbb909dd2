#include <doctest.h>

#include <cstdlib>
#include <deque>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptsense/error.hpp"
#include "promptsense/remote_backend.hpp"

using namespace promptsense;
using nlohmann::json;

namespace {

struct Recorded {
  std::string path;
  std::string body;
  HttpHeaders headers;
};

class ScriptedTransport : public HttpTransport {
 public:
  explicit ScriptedTransport(std::deque<HttpResponse> script, std::vector<Recorded>* log)
      : script_(std::move(script)), log_(log) {}
  HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) override {
    log_->push_back({path, body, headers});
    if (script_.empty()) return {500, "", ""};
    auto r = script_.front();
    script_.pop_front();
    return r;
  }

 private:
  std::deque<HttpResponse> script_;
  std::vector<Recorded>* log_;
};

std::string ok_body(const std::string& content) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

ChatRequest request() {
  ChatRequest r;
  r.messages = {{Role::system, "sys"}, {Role::user, "text"}};
  r.config.model_id = "gpt-test";
  r.config.temperature = 0.7;
  r.config.top_p = 0.5;
  r.config.max_tokens = 16;
  return r;
}

struct Harness {
  std::vector<Recorded> log;
  std::vector<std::chrono::milliseconds> sleeps;

  RemoteBackend make(std::deque<HttpResponse> script) {
    RemoteBackendOptions opt;
    opt.api_key = "sk-test";
    return RemoteBackend(opt, std::make_unique<ScriptedTransport>(std::move(script), &log),
                         [this](std::chrono::milliseconds d) { sleeps.push_back(d); });
  }
};

}  // namespace

TEST_CASE("backoff is exponential and capped") {
  RetryPolicy p;
  CHECK(p.backoff(1).count() == 500);
  CHECK(p.backoff(2).count() == 1000);
  CHECK(p.backoff(4).count() == 4000);
  CHECK(p.backoff(5).count() == 8000);
  CHECK(p.backoff(12).count() == 8000);
}

TEST_CASE("request body and happy path") {
  Harness h;
  auto backend = h.make({{200, ok_body("positive"), ""}});
  CHECK(backend.complete(request()) == "positive");
  REQUIRE(h.log.size() == 1);
  CHECK(h.log[0].path == "/v1/chat/completions");
  const auto body = json::parse(h.log[0].body);
  CHECK(body["model"] == "gpt-test");
  CHECK(body["temperature"] == 0.7);
  CHECK(body["top_p"] == 0.5);
  CHECK(body["max_tokens"] == 16);
  CHECK(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][1]["content"] == "text");
  CHECK(h.log[0].headers.at(0).second == "Bearer sk-test");
  CHECK(h.sleeps.empty());
  CHECK(backend.id().rfind("remote:", 0) == 0);
}

TEST_CASE("five server errors give a transport error with five attempts") {
  Harness h;
  auto backend = h.make({{500, "", ""}, {500, "", ""}, {500, "", ""}, {500, "", ""}, {500, "", ""}});
  try {
    backend.complete(request());
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 5);
    CHECK(e.cache_key() == cache_key(backend.id(), request().config, request().messages));
  }
  CHECK(h.log.size() == 5);
  REQUIRE(h.sleeps.size() == 4);
  CHECK(h.sleeps[0].count() == 500);
  CHECK(h.sleeps[3].count() == 4000);
}

TEST_CASE("transient failures recover") {
  Harness h;
  auto backend = h.make({{0, "", "connection refused"}, {503, "", ""}, {200, ok_body("toxic"), ""}});
  CHECK(backend.complete(request()) == "toxic");
  CHECK(h.log.size() == 3);
}

TEST_CASE("rate limit and protocol errors") {
  Harness h;
  auto limited = h.make({{429, "", ""}, {429, "", ""}, {429, "", ""}, {429, "", ""}, {429, "", ""}});
  CHECK_THROWS_AS(limited.complete(request()), RateLimitError);

  Harness h2;
  auto rejected = h2.make({{400, "bad", ""}});
  CHECK_THROWS_AS(rejected.complete(request()), ProtocolError);
  CHECK(h2.log.size() == 1);

  Harness h3;
  auto garbled = h3.make({{200, R"({"choices": []})", ""}});
  CHECK_THROWS_AS(garbled.complete(request()), ProtocolError);

  CHECK(RemoteBackend::parse_reply(R"({"choices":[{"message":{"content":null}}]})", "k").empty());
  CHECK_THROWS_AS(RemoteBackend::parse_reply("<html>", "k"), ProtocolError);
}

TEST_CASE("api key comes from the environment") {
  ::unsetenv(kApiKeyEnvVar);
  CHECK_FALSE(api_key_from_env().has_value());
  ::setenv(kApiKeyEnvVar, "", 1);
  CHECK_FALSE(api_key_from_env().has_value());
  ::setenv(kApiKeyEnvVar, "abc", 1);
  CHECK(api_key_from_env() == "abc");
  ::unsetenv(kApiKeyEnvVar);
}

TEST_CASE("wire round trip against a local server") {
  httplib::Server server;
  std::string seen_auth;
  json seen_body;
  server.Post("/proxy/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_body = json::parse(req.body);
    res.set_content(ok_body("reply for " + seen_body["messages"][1]["content"].get<std::string>()),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteBackendOptions opt;
  opt.base_url = "http://127.0.0.1:" + std::to_string(port) + "/proxy/";
  opt.api_key = "k1";
  RemoteBackend backend(opt, make_http_transport(opt.base_url, std::chrono::seconds(5)));
  CHECK(backend.complete(request()) == "reply for text");
  CHECK(seen_auth == "Bearer k1");
  CHECK(seen_body["model"] == "gpt-test");

  server.stop();
  t.join();

  // nothing listening any more: status 0 on every attempt
  opt.retry.max_attempts = 2;
  opt.retry.initial_backoff = std::chrono::milliseconds(1);
  RemoteBackend dead(opt, make_http_transport(opt.base_url, std::chrono::seconds(1)));
  try {
    dead.complete(request());
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 2);
  }
}
