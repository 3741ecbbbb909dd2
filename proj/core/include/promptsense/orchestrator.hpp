#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "promptsense/chat.hpp"
#include "promptsense/dataset.hpp"
#include "promptsense/parser.hpp"
#include "promptsense/task.hpp"
#include "promptsense/templates.hpp"

namespace promptsense {

struct SweepPoint {
  double temperature = 0.0;
  double top_p = 1.0;

  friend auto operator<=>(const SweepPoint&, const SweepPoint&) = default;
};

struct PoolEntry {
  int repeat = 0;
  std::string raw;
  ParseOutcome outcome = ParseOutcome::unparsed("");
};

/// Per example (in dataset order) the repeated outcomes, ordered by repeat index.
struct PredictionPool {
  std::size_t repeats = 0;
  std::vector<std::string> example_ids;
  std::vector<std::vector<PoolEntry>> entries;

  /// Every example has exactly `repeats` entries with repeat indices 0..repeats-1.
  bool is_complete() const;
  /// Throws ShapeError naming the first offending example.
  void require_complete() const;
};

struct PoolKey {
  std::string template_name;
  SweepPoint point;

  friend auto operator<=>(const PoolKey&, const PoolKey&) = default;
};

using PoolSet = std::map<PoolKey, PredictionPool>;

/// True if the template transitively includes "CoT Instructions" (its reply is verbose and
/// the label sits on the last line).
bool is_verbose_template(const TemplateLibrary& library, std::string_view name);

struct EvaluationPlan {
  explicit EvaluationPlan(TaskSpec task_spec) : task(std::move(task_spec)) {}

  TaskSpec task;
  std::vector<LabeledExample> examples;
  std::vector<std::string> template_names;
  std::vector<SweepPoint> points;
  int repeats = 9;
  std::string model_id = "gpt-3.5-turbo-0613";
  std::uint64_t seed = 0;
  ParserConfig parser;
  /// Overrides the per-template default (on for verbose templates, off otherwise).
  std::optional<bool> last_line_mode;
  int max_tokens_direct = 16;
  int max_tokens_verbose = 512;
  /// Record failed cells as unparsed instead of leaving them out of the pools.
  bool allow_partial = false;
  /// At temperature 0, repeats after the first reuse the first repeat's reply under their
  /// own cache keys.
  bool share_greedy_repeats = true;
  /// 0 means the backend's own limit.
  std::size_t max_in_flight = 0;

  void validate(const TemplateLibrary& library) const;
  /// Digest of everything that affects the pools (dataset contents included).
  std::string digest() const;
};

struct CellFailure {
  std::string example_id;
  std::string template_name;
  SweepPoint point;
  int repeat = 0;
  std::string error;
  std::string cache_key;
};

struct RunManifest {
  std::string task;
  std::string plan_digest;
  std::string library_digest;
  std::string backend_id;
  std::string started_at;
  std::string finished_at;
  std::size_t examples = 0;
  std::size_t templates = 0;
  std::size_t points = 0;
  std::size_t repeats = 0;
  /// examples * templates * points * repeats
  std::size_t cells = 0;
  /// Cells for which the backend was contacted.
  std::size_t backend_calls = 0;
  /// Cells served entirely from the cache.
  std::size_t cache_hits = 0;
  /// Raw number of backend requests, verification base turns included.
  std::size_t backend_requests = 0;
  bool complete = false;
  bool partial_allowed = false;
  std::vector<CellFailure> failures;

  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
};

struct PlanResult {
  PoolSet pools;
  RunManifest manifest;
};

struct CellResult {
  ParseOutcome outcome;
  std::string raw;
  bool from_cache = false;
};

struct VerificationResult {
  ParseOutcome outcome;
  std::string base_raw;
  std::string final_raw;
  bool from_cache = false;
};

/// Two-message prediction: [system: rendered template, user: example text].
CellResult run_single(const LabeledExample& example, std::string_view template_name, const TaskSpec& task,
                      CachingClient& client, const GenerationConfig& config, const ParserConfig& parser,
                      const TemplateLibrary& library);

/// Four-message verification: the base conversation, its (cached) verbose reply, then the
/// rendered follow-up instruction. The final reply is parsed with last-line mode off.
VerificationResult run_verification(const LabeledExample& example, std::string_view base_template_name,
                                    std::string_view verify_template_name, const TaskSpec& task,
                                    CachingClient& client, const GenerationConfig& config,
                                    const ParserConfig& parser, const TemplateLibrary& library);

struct RunProgress {
  std::size_t cells_done = 0;
  std::size_t cells_total = 0;
  std::size_t cache_hits = 0;
};

/// Executes every (template, sweep point, example, repeat) cell. Cells run concurrently up to
/// the in-flight limit; results are assembled by key, so pools do not depend on scheduling.
PlanResult run_plan(const EvaluationPlan& plan, CachingClient& client, const TemplateLibrary& library,
                    const std::function<void(const RunProgress&)>& progress = {});

/// Pools JSONL, one row per (template, point, example, repeat), sorted by template, point,
/// dataset order and repeat.
std::string pools_to_jsonl(const PoolSet& pools);
PoolSet pools_from_jsonl(std::string_view text);
void write_pools(const std::filesystem::path& path, const PoolSet& pools);
PoolSet read_pools(const std::filesystem::path& path);

}  // namespace promptsense
