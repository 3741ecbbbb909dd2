#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promptsense/dataset.hpp"
#include "promptsense/orchestrator.hpp"
#include "promptsense/parser.hpp"
#include "promptsense/task.hpp"

namespace promptsense {

enum class Metric { accuracy, uar, parsed_rate };
enum class UnparsedPolicy { count_as_incorrect, exclude };

std::string_view to_string(Metric metric);
std::string_view to_string(UnparsedPolicy policy);
Metric metric_from_string(std::string_view text);
UnparsedPolicy unparsed_policy_from_string(std::string_view text);

struct MetricKind {
  Metric metric = Metric::accuracy;
  /// Ignored for parsed_rate.
  UnparsedPolicy policy = UnparsedPolicy::count_as_incorrect;
};

/// Label index (0 or 1) of a task label, or kUnparsed.
using LabelCode = std::int8_t;
inline constexpr LabelCode kUnparsed = -1;

LabelCode encode_label(std::string_view label, const TaskSpec& task);
LabelCode encode_outcome(const ParseOutcome& outcome, const TaskSpec& task);

/// Accuracy. count_as_incorrect: unparsed predictions are wrong, denominator N. exclude:
/// ratio over parsed predictions only; UndefinedMetricError when none parsed.
double accuracy(std::span<const LabelCode> predictions, std::span<const LabelCode> golds, UnparsedPolicy policy);
/// Mean of the two per-class recalls. UndefinedMetricError when a gold class is absent (or,
/// under exclude, has no parsed predictions).
double uar(std::span<const LabelCode> predictions, std::span<const LabelCode> golds, UnparsedPolicy policy);
/// Fraction of parsed predictions. UndefinedMetricError on empty input.
double parsed_rate(std::span<const LabelCode> predictions);
double evaluate(const MetricKind& kind, std::span<const LabelCode> predictions, std::span<const LabelCode> golds);

/// Running counts from which every metric can be computed.
struct MetricTally {
  std::array<std::size_t, 2> total{};
  std::array<std::size_t, 2> parsed{};
  std::array<std::size_t, 2> correct{};

  void add(LabelCode prediction, LabelCode gold) noexcept {
    ++total[gold];
    if (prediction != kUnparsed) {
      ++parsed[gold];
      if (prediction == gold) ++correct[gold];
    }
  }
  double value(const MetricKind& kind) const;
};

/// A prediction pool flattened to label codes: row-major examples x repeats.
struct CodedPool {
  std::size_t examples = 0;
  std::size_t repeats = 0;
  std::vector<LabelCode> codes;
  std::vector<LabelCode> golds;

  LabelCode at(std::size_t example, std::size_t repeat) const { return codes[example * repeats + repeat]; }
  /// The predictions of a single repeat across all examples.
  std::vector<LabelCode> repeat_column(std::size_t repeat) const;
};

/// Aligns a complete pool with the dataset by example id. Throws ShapeError for an incomplete
/// pool and InvalidInputError on id mismatch.
CodedPool encode_pool(const PredictionPool& pool, std::span<const LabeledExample> examples, const TaskSpec& task);

struct MonteCarloConfig {
  std::size_t n_samples = 16384;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  /// Worker threads; 0 picks a small default. Results do not depend on it.
  unsigned threads = 0;

  void validate() const;
};

struct MetricDistribution {
  std::vector<double> samples;
  double mean = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;

  double ci_width() const noexcept { return ci_upper - ci_lower; }
  /// Sample standard deviation of the metric values.
  double stddev() const;
};

/// Percentile interval bounds for a sample: order statistics at floor(a/2 * n) and
/// ceil((1 - a/2) * n) - 1 of the sorted values, a = 1 - ci_level.
std::pair<double, double> percentile_interval(std::vector<double> samples, double ci_level);

/// Resamples full-dataset predictions by picking one repeat per example uniformly and
/// independently, n_samples times. Draw d uses a substream derived from (seed, d).
MetricDistribution mc_distribution(const CodedPool& pool, const MetricKind& kind, const MonteCarloConfig& config);

/// Several metrics over the same resampled dataset predictions. Each result is identical to
/// what mc_distribution returns for that metric alone. A metric that is undefined for some
/// draw yields std::nullopt.
std::vector<std::optional<MetricDistribution>> mc_distributions(const CodedPool& pool,
                                                                std::span<const MetricKind> kinds,
                                                                const MonteCarloConfig& config);

/// Exact expected accuracy over the resampling distribution. Linear for count_as_incorrect;
/// for exclude, computed by dynamic programming over (parsed, correct) counts.
double exact_expected_accuracy(const CodedPool& pool, UnparsedPolicy policy);

struct SignificanceResult {
  double p_value = 1.0;
  std::size_t n_permutations = 0;
  double observed_diff = 0.0;
};

/// Paired two-tailed randomized permutation test on |metric(a) - metric(b)|. Each permutation
/// swaps a[i] and b[i] independently with probability 1/2. p = (1 + #{stat >= observed}) /
/// (n_permutations + 1).
SignificanceResult permutation_test(std::span<const LabelCode> predictions_a, std::span<const LabelCode> predictions_b,
                                    std::span<const LabelCode> golds, const MetricKind& kind,
                                    std::size_t n_permutations, std::uint64_t seed);

/// "**" for p < 0.01, "*" for p < 0.05, otherwise empty.
std::string significance_stars(double p_value);

}  // namespace promptsense
