#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptsense/chat.hpp"

namespace promptsense {

inline constexpr const char* kApiKeyEnvVar = "PROMPTSENSE_API_KEY";

struct HttpResponse {
  /// 0 when no response was received (connection refused, timeout, ...).
  int status = 0;
  std::string body;
  std::string error;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// Minimal POST-only HTTP client seam, so tests can inject failures.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body, const HttpHeaders& headers) = 0;
};

/// cpp-httplib backed transport for http:// and https:// base URLs.
std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url,
                                                   std::chrono::seconds timeout = std::chrono::seconds(120));

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};

  /// Delay before retry number `retry` (1-based): initial * 2^(retry-1), capped.
  std::chrono::milliseconds backoff(int retry) const;
};

struct RemoteBackendOptions {
  std::string base_url = "https://api.openai.com";
  std::string api_key;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
};

/// API key from PROMPTSENSE_API_KEY, if set and non-empty.
std::optional<std::string> api_key_from_env();

/// OpenAI-compatible chat completions client: POST {base}/v1/chat/completions.
class RemoteBackend final : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RemoteBackend(RemoteBackendOptions options, std::unique_ptr<HttpTransport> transport, Sleeper sleeper = {});

  std::string id() const override;
  std::string complete(const ChatRequest& request) override;
  std::size_t max_in_flight() const override { return options_.max_in_flight; }

  /// JSON body sent for a request.
  static std::string request_body(const ChatRequest& request);
  /// Extracts choices[0].message.content; throws ProtocolError on a malformed payload.
  static std::string parse_reply(const std::string& body, const std::string& key);

 private:
  RemoteBackendOptions options_;
  std::unique_ptr<HttpTransport> transport_;
  Sleeper sleeper_;
};

}  // namespace promptsense
