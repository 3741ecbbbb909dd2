#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "promptsense/orchestrator.hpp"
#include "promptsense/parser.hpp"
#include "promptsense/report.hpp"
#include "promptsense/stats.hpp"
#include "promptsense/task.hpp"
#include "promptsense/templates.hpp"

namespace promptsense {

struct TaskEntry {
  TaskSpec task;
  std::filesystem::path dataset;
};

struct BackendSpec {
  enum class Kind { remote, simulator };
  Kind kind = Kind::simulator;
  std::string model_id = "gpt-3.5-turbo-0613";
  std::size_t max_in_flight = 4;
  // remote
  std::string base_url = "https://api.openai.com";
  // simulator
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> behavior_file;
  /// Inline behavior document (same schema as the behavior file).
  std::optional<std::string> behavior_json;
};

struct SweepSpec {
  std::vector<double> temperatures;
  std::vector<double> top_ps;
  /// top_p used along the temperature axis.
  double fixed_top_p = 1.0;
  /// Temperature used along the top_p axis.
  double fixed_temperature = 1.0;
  int repeats = 9;

  /// Distinct points of both axes, sorted.
  std::vector<SweepPoint> grid() const;
  /// Empty if the axis is not swept.
  AxisPoints axis(SweepAxis which) const;
};

struct StatsSpec {
  std::size_t n_samples = 16384;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  UnparsedPolicy unparsed_policy = UnparsedPolicy::count_as_incorrect;
  std::size_t n_permutations = 10000;
};

struct ReportSpec {
  SweepPoint point{0.0, 1.0};
  std::string base_template = "Base";
};

/// The single JSON document describing an experiment. Relative paths are resolved against
/// the directory of the config file.
struct RunConfigDocument {
  std::vector<TaskEntry> tasks;
  BackendSpec backend;
  std::vector<std::string> templates;
  std::optional<std::filesystem::path> template_library;
  SweepSpec sweep;
  StatsSpec stats;
  ParserConfig parser;
  std::optional<bool> last_line_mode;
  bool share_greedy_repeats = true;
  ReportSpec report;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> cache_path;

  static RunConfigDocument from_json(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfigDocument load(const std::filesystem::path& path);

  /// The configured library, or the built-in one.
  TemplateLibrary library() const;
  /// Throws ConfigError / NotFoundError on inconsistent settings.
  void validate(const TemplateLibrary& library) const;

  std::filesystem::path resolved_cache_path() const;
  std::filesystem::path pools_path(const std::string& task) const;
  std::filesystem::path manifest_path(const std::string& task) const;
  std::filesystem::path analysis_dir() const;
  std::filesystem::path report_dir() const;

  EvaluationPlan plan_for(const TaskEntry& entry, std::vector<LabeledExample> examples) const;
};

/// File-name friendly form of a template name ("Expert Detailed" -> "Expert_Detailed").
std::string slug(std::string_view name);

}  // namespace promptsense
