#include "promptsense/chat.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptsense/digest.hpp"
#include "promptsense/error.hpp"

namespace promptsense {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view text) {
  if (text == "system") return Role::system;
  if (text == "user") return Role::user;
  if (text == "assistant") return Role::assistant;
  throw InvalidInputError("unknown chat role '" + std::string(text) + "'");
}

void GenerationConfig::validate() const {
  if (model_id.empty()) throw InvalidInputError("model_id is empty");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw InvalidInputError("temperature must be >= 0");
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw InvalidInputError("top_p must lie in [0, 1]");
  if (max_tokens <= 0) throw InvalidInputError("max_tokens must be positive");
  if (repeat_index < 0) throw InvalidInputError("repeat_index must be >= 0");
}

void validate_conversation(std::span<const ChatMessage> messages) {
  if (messages.empty() || messages.front().role != Role::system) {
    throw InvalidInputError("conversation must start with a system message");
  }
  for (std::size_t i = 1; i < messages.size(); ++i) {
    if (messages[i].role == Role::system) throw InvalidInputError("system message after the first turn");
    if (messages[i].role == Role::assistant && messages[i - 1].role == Role::assistant) {
      throw InvalidInputError("two consecutive assistant messages");
    }
  }
  if (messages.back().role != Role::user) throw InvalidInputError("conversation must end with a user message");
}

namespace {

json messages_to_json(std::span<const ChatMessage> messages) {
  json out = json::array();
  for (const auto& m : messages) out.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  return out;
}

std::vector<ChatMessage> messages_from_json(const json& j) {
  std::vector<ChatMessage> out;
  for (const auto& m : j) out.push_back({role_from_string(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  return out;
}

}  // namespace

std::string cache_key(std::string_view backend_id, const GenerationConfig& config,
                      std::span<const ChatMessage> messages) {
  // Array form so key order never depends on the JSON library.
  json doc = json::array({"promptsense-cache/1", std::string(backend_id), config.model_id, config.temperature,
                          config.top_p, config.repeat_index, config.seed, messages_to_json(messages)});
  return sha256_hex(doc.dump());
}

std::string record_to_json_line(const CompletionRecord& record) {
  json doc = {{"cache_key", record.cache_key},
              {"backend_id", record.backend_id},
              {"created_at", record.created_at},
              {"request",
               {{"messages", messages_to_json(record.messages)},
                {"config",
                 {{"model", record.config.model_id},
                  {"temperature", record.config.temperature},
                  {"top_p", record.config.top_p},
                  {"max_tokens", record.config.max_tokens},
                  {"repeat_index", record.config.repeat_index},
                  {"seed", record.config.seed}}}}},
              {"response_content", record.response_content}};
  return doc.dump();
}

CompletionRecord record_from_json_line(std::string_view line) {
  try {
    const json doc = json::parse(line);
    CompletionRecord r;
    r.cache_key = doc.at("cache_key").get<std::string>();
    r.backend_id = doc.value("backend_id", std::string());
    r.created_at = doc.value("created_at", std::string());
    r.response_content = doc.at("response_content").get<std::string>();
    if (doc.contains("request")) {
      const auto& req = doc["request"];
      r.messages = messages_from_json(req.at("messages"));
      const auto& c = req.at("config");
      r.config.model_id = c.value("model", std::string());
      r.config.temperature = c.value("temperature", 0.0);
      r.config.top_p = c.value("top_p", 1.0);
      r.config.max_tokens = c.value("max_tokens", 16);
      r.config.repeat_index = c.value("repeat_index", 0);
      r.config.seed = c.value("seed", std::uint64_t{0});
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed cache record: ") + e.what());
  }
}

ResponseCache::ResponseCache(std::filesystem::path file) : file_(std::move(file)) {
  if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
  std::string text;
  if (std::ifstream in{*file_, std::ios::binary}) {
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  // An unterminated last line is a torn write from an interrupted run. Drop it so the next
  // append starts on a fresh line; the cell will simply be recomputed.
  const std::size_t complete = text.rfind('\n') == std::string::npos ? 0 : text.rfind('\n') + 1;
  if (complete < text.size()) {
    std::filesystem::resize_file(*file_, complete);
    text.resize(complete);
  }
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto record = record_from_json_line(line);
      entries_.insert_or_assign(std::move(record.cache_key), std::move(record.response_content));
    } catch (const FormatError&) {
      // corrupt line in the middle; skip it
    }
  }
  out_.open(*file_, std::ios::binary | std::ios::app);
  if (!out_) throw ConfigError("cannot open cache file '" + file_->string() + "' for appending");
}

std::optional<std::string> ResponseCache::lookup(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const CompletionRecord& record) {
  std::lock_guard lock(mutex_);
  entries_.insert_or_assign(record.cache_key, record.response_content);
  if (out_.is_open()) {
    out_ << record_to_json_line(record) << '\n';
    out_.flush();
  }
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string complete(ChatBackend& backend, const ChatRequest& request) {
  validate_conversation(request.messages);
  request.config.validate();
  return backend.complete(request);
}

CachingClient::CachingClient(ChatBackend& backend, ResponseCache* cache)
    : backend_(backend), cache_(cache ? cache : &memory_) {}

void CachingClient::remember(const std::string& key, const ChatRequest& request, const std::string& content) {
  cache_->store(CompletionRecord{key, request.messages, request.config, content, utc_timestamp(), backend_.id()});
}

CachingClient::Completion CachingClient::complete(const ChatRequest& request) {
  validate_conversation(request.messages);
  request.config.validate();
  const std::string key = cache_key(backend_.id(), request.config, request.messages);

  std::promise<std::string> promise;
  {
    std::unique_lock lock(inflight_mutex_);
    if (auto hit = cache_->lookup(key)) {
      ++cache_hits_;
      return {std::move(*hit), true};
    }
    if (auto it = inflight_.find(key); it != inflight_.end()) {
      auto shared = it->second;
      lock.unlock();
      ++cache_hits_;
      return {shared.get(), true};
    }
    inflight_.emplace(key, promise.get_future().share());
  }

  try {
    ++backend_calls_;
    std::string content = backend_.complete(request);
    remember(key, request, content);
    promise.set_value(content);
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(key);
    return {std::move(content), false};
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(inflight_mutex_);
    inflight_.erase(key);
    throw;
  }
}

CachingClient::Completion CachingClient::complete_as(const ChatRequest& request, const ChatRequest& source) {
  validate_conversation(request.messages);
  request.config.validate();
  const std::string key = cache_key(backend_.id(), request.config, request.messages);
  if (auto hit = cache_->lookup(key)) {
    ++cache_hits_;
    return {std::move(*hit), true};
  }
  Completion result = complete(source);
  remember(key, request, result.content);
  return result;
}

}  // namespace promptsense
