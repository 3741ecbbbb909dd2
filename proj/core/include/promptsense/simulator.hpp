#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptsense/chat.hpp"

namespace promptsense {

/// A candidate reply and its logit. The text may reference {gold}, {other}, {label0} and
/// {label1}, filled from the call context.
struct ResponseOption {
  std::string text;
  double logit = 0.0;
};

/// Matches calls by any subset of its fields; unset fields match everything.
struct BehaviorRule {
  std::optional<std::string> task;
  std::optional<std::string> template_name;
  std::optional<std::string> example_id;
  std::optional<std::string> turn;
  std::optional<int> repeat;
  std::vector<ResponseOption> options;

  bool matches(const CallContext& context, int repeat_index) const;
  int specificity() const noexcept;
};

/// Behavior of the simulated model. The most specific matching rule wins; among equally
/// specific rules the first one listed wins.
class BehaviorTable {
 public:
  BehaviorTable() = default;

  /// {"default": {"options": [...]}, "rules": [{"task": ..., "template": ..., "example_id": ...,
  ///   "turn": ..., "repeat": ..., "options": [{"text": ..., "logit": ...}]}]}
  static BehaviorTable from_json(std::string_view json_text);
  static BehaviorTable load(const std::filesystem::path& path);

  /// Every call draws between a correct reply (logit = margin) and a wrong one (logit 0).
  static BehaviorTable fixed_margin(double margin);

  void add_rule(BehaviorRule rule);
  void set_default(std::vector<ResponseOption> options);

  /// Options for a call, or nullptr when nothing matches and there is no default.
  const std::vector<ResponseOption>* lookup(const CallContext& context, int repeat_index) const;

 private:
  std::vector<BehaviorRule> rules_;
  std::optional<std::vector<ResponseOption>> default_;
};

/// Deterministic offline chat model. Each call's seed is derived from the master seed,
/// config.seed, the model id, repeat index and message contents, but not from temperature or
/// top_p: sweep points reuse the same random draw for a cell, so shifting probability mass
/// moves outcomes monotonically.
class SimulatedChatModel final : public ChatBackend {
 public:
  SimulatedChatModel(BehaviorTable behavior, std::uint64_t master_seed, std::string id = "simulator");

  std::string id() const override { return id_; }
  std::string complete(const ChatRequest& request) override;
  std::size_t max_in_flight() const override { return in_flight_; }
  void set_max_in_flight(std::size_t n) { in_flight_ = n; }

  const BehaviorTable& behavior() const noexcept { return behavior_; }
  std::uint64_t master_seed() const noexcept { return master_seed_; }

 private:
  BehaviorTable behavior_;
  std::uint64_t master_seed_;
  std::string id_;
  std::size_t in_flight_ = 4;
};

/// Draws one configured reply for the request with probabilities given by the matched
/// options' logits shaped by (temperature, top_p). Throws ConfigError when no rule matches.
std::string simulate_completion(const SimulatedChatModel& model, const ChatRequest& request);

}  // namespace promptsense
