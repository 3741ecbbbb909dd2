#include "promptsense/remote_backend.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "promptsense/error.hpp"

namespace promptsense {

using nlohmann::json;

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(std::string base_url, std::chrono::seconds timeout) : timeout_(timeout) {
    // Split "scheme://host[:port]/prefix" into the origin and a path prefix.
    const auto scheme_end = base_url.find("://");
    const auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
      origin_ = std::move(base_url);
    } else {
      origin_ = base_url.substr(0, path_start);
      prefix_ = base_url.substr(path_start);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
  }

  HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) override {
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto result = client.Post(prefix_ + path, h, body, "application/json");
    if (!result) return {0, {}, httplib::to_string(result.error())};
    return {result->status, result->body, {}};
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url, std::chrono::seconds timeout) {
  return std::make_unique<HttplibTransport>(base_url, timeout);
}

std::chrono::milliseconds RetryPolicy::backoff(int retry) const {
  auto delay = initial_backoff;
  for (int i = 1; i < retry && delay < max_backoff; ++i) delay *= 2;
  return std::min(delay, max_backoff);
}

std::optional<std::string> api_key_from_env() {
  const char* value = std::getenv(kApiKeyEnvVar);
  if (!value || !*value) return std::nullopt;
  return std::string(value);
}

RemoteBackend::RemoteBackend(RemoteBackendOptions options, std::unique_ptr<HttpTransport> transport, Sleeper sleeper)
    : options_(std::move(options)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!transport_) throw InvalidInputError("remote backend needs a transport");
  if (options_.retry.max_attempts < 1) throw InvalidInputError("retry policy needs at least one attempt");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string RemoteBackend::id() const { return "remote:" + options_.base_url; }

std::string RemoteBackend::request_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  json body = {{"model", request.config.model_id},
               {"messages", std::move(messages)},
               {"temperature", request.config.temperature},
               {"top_p", request.config.top_p},
               {"max_tokens", request.config.max_tokens}};
  return body.dump();
}

std::string RemoteBackend::parse_reply(const std::string& body, const std::string& key) {
  try {
    const json doc = json::parse(body);
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed chat completion payload: ") + e.what(), key);
  }
}

std::string RemoteBackend::complete(const ChatRequest& request) {
  const std::string key = cache_key(id(), request.config, request.messages);
  const std::string body = request_body(request);
  const HttpHeaders headers = {{"Authorization", "Bearer " + options_.api_key}};

  HttpResponse last;
  int attempt = 0;
  while (attempt < options_.retry.max_attempts) {
    if (attempt > 0) sleeper_(options_.retry.backoff(attempt));
    ++attempt;
    last = transport_->post("/v1/chat/completions", body, headers);
    if (last.status >= 200 && last.status < 300) return parse_reply(last.body, key);
    const bool transient = last.status == 0 || last.status == 429 || last.status >= 500;
    if (!transient) {
      throw ProtocolError("chat completion rejected with HTTP " + std::to_string(last.status) + ": " + last.body, key,
                          attempt);
    }
  }
  if (last.status == 429) {
    throw RateLimitError("rate limited after " + std::to_string(attempt) + " attempts", key, attempt);
  }
  const std::string what = last.status == 0 ? last.error : "HTTP " + std::to_string(last.status);
  throw TransportError("chat completion failed after " + std::to_string(attempt) + " attempts (" + what + ")", key,
                       attempt);
}

}  // namespace promptsense
