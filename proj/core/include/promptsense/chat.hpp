#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptsense {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct ChatMessage {
  Role role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct GenerationConfig {
  std::string model_id;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 16;
  /// Which of the R repeated calls for an example this is.
  int repeat_index = 0;
  /// Only used by the simulator, but part of the cache key.
  std::uint64_t seed = 0;

  void validate() const;
};

/// Information about where a request comes from. Never sent over the wire and not part of
/// the cache key; the simulator uses it to pick a behavior.
struct CallContext {
  std::string task;
  std::string template_name;
  std::string example_id;
  /// "predict" for the first assistant turn, "verify" for a verification follow-up.
  std::string turn = "predict";
  std::optional<std::string> gold;
  std::array<std::string, 2> labels;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  GenerationConfig config;
  CallContext context;
};

/// Checks that the conversation starts with a system message, has no two consecutive
/// assistant turns and ends with a user turn.
void validate_conversation(std::span<const ChatMessage> messages);

/// Stable digest of everything that determines a completion.
std::string cache_key(std::string_view backend_id, const GenerationConfig& config,
                      std::span<const ChatMessage> messages);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string id() const = 0;
  /// Returns the assistant reply. Must be safe to call from several threads.
  virtual std::string complete(const ChatRequest& request) = 0;
  /// Upper bound on concurrent complete() calls the runner should issue.
  virtual std::size_t max_in_flight() const { return 4; }
};

struct CompletionRecord {
  std::string cache_key;
  std::vector<ChatMessage> messages;
  GenerationConfig config;
  std::string response_content;
  std::string created_at;
  std::string backend_id;
};

std::string record_to_json_line(const CompletionRecord& record);
CompletionRecord record_from_json_line(std::string_view line);

/// Response cache. With a file, records are appended one JSON object per line and the file
/// is replayed on construction, later lines winning over earlier ones. A truncated final
/// line (from a crash) is ignored.
class ResponseCache {
 public:
  /// In-memory only.
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path file);

  std::optional<std::string> lookup(const std::string& key) const;
  void store(const CompletionRecord& record);
  std::size_t size() const;
  const std::optional<std::filesystem::path>& file() const noexcept { return file_; }

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
  std::optional<std::filesystem::path> file_;
  std::ofstream out_;
};

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

/// Validates a request and forwards it to the backend, without caching.
std::string complete(ChatBackend& backend, const ChatRequest& request);

/// Front door to a backend: validates requests, serves repeated cache keys from the cache
/// and makes concurrent requests for the same key share a single backend call.
class CachingClient {
 public:
  struct Completion {
    std::string content;
    bool from_cache = false;
  };

  explicit CachingClient(ChatBackend& backend, ResponseCache* cache = nullptr);

  Completion complete(const ChatRequest& request);

  /// Serves request from the cache if present; otherwise completes source and records its
  /// content under request's key as well.
  Completion complete_as(const ChatRequest& request, const ChatRequest& source);

  ChatBackend& backend() noexcept { return backend_; }
  std::size_t backend_calls() const noexcept { return backend_calls_.load(); }
  std::size_t cache_hits() const noexcept { return cache_hits_.load(); }

 private:
  void remember(const std::string& key, const ChatRequest& request, const std::string& content);

  ChatBackend& backend_;
  ResponseCache* cache_;
  ResponseCache memory_;
  std::mutex inflight_mutex_;
  std::unordered_map<std::string, std::shared_future<std::string>> inflight_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace promptsense
