#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptsense/dataset.hpp"
#include "promptsense/orchestrator.hpp"
#include "promptsense/stats.hpp"
#include "promptsense/task.hpp"

namespace promptsense {

enum class SweepAxis { temperature, top_p };
std::string_view to_string(SweepAxis axis);

/// Points along one sweep axis: the varied parameter value and the full sweep point.
using AxisPoints = std::vector<std::pair<double, SweepPoint>>;

struct CurvePoint {
  double param = 0.0;
  double mean = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

struct SensitivityCurve {
  std::string task;
  std::string template_name;
  Metric metric = Metric::accuracy;
  SweepAxis axis = SweepAxis::temperature;
  /// Sorted by param.
  std::vector<CurvePoint> points;
};

/// A task's dataset and its persisted pools.
struct TaskPools {
  TaskSpec task;
  std::vector<LabeledExample> examples;
  PoolSet pools;
};

/// Monte Carlo mean and interval of one metric at each axis point.
SensitivityCurve build_curve(const TaskPools& data, const std::string& template_name, const MetricKind& kind,
                             SweepAxis axis, const AxisPoints& points, const MonteCarloConfig& config);

/// "param,mean,ci_lower,ci_upper" with six decimals.
std::string curve_to_csv(const SensitivityCurve& curve);
/// Self-contained SVG line chart with a shaded interval band.
std::string curve_to_svg(const SensitivityCurve& curve);

struct ResultsCell {
  double parsed = 0.0;
  double accuracy = 0.0;
  double uar = 0.0;
  /// Permutation p-values against the reference template; empty for the reference row.
  std::optional<double> parsed_p;
  std::optional<double> accuracy_p;
  std::optional<double> uar_p;
};

struct ResultsRow {
  std::string template_name;
  /// One cell per task, in table task order.
  std::vector<ResultsCell> cells;
};

struct ResultsTable {
  std::vector<std::string> tasks;
  std::string base_template;
  SweepPoint point;
  UnparsedPolicy policy = UnparsedPolicy::count_as_incorrect;
  std::vector<ResultsRow> rows;
};

struct ResultsOptions {
  std::string base_template = "Base";
  SweepPoint point{0.0, 1.0};
  UnparsedPolicy policy = UnparsedPolicy::count_as_incorrect;
  std::size_t n_permutations = 10000;
  std::uint64_t seed = 0;
};

/// Parsed rate, accuracy and UAR of the first repeat at the comparison point, with paired
/// permutation tests against the base template. Undefined metrics are NaN.
ResultsTable build_results_table(std::span<const TaskPools> data, std::span<const std::string> templates,
                                 const ResultsOptions& options);

/// One row per template; per task: parsed, acc, uar (percent, one decimal) and their p-values.
std::string results_to_csv(const ResultsTable& table);
/// Markdown table with "*" (p < 5%) and "**" (p < 1%) markers.
std::string results_to_markdown(const ResultsTable& table);

/// Fixed-precision decimal, "nan" for NaN.
std::string format_fixed(double value, int decimals);

}  // namespace promptsense
