#include "promptsense/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "promptsense/error.hpp"
#include "promptsense/random.hpp"

namespace promptsense {

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::accuracy: return "accuracy";
    case Metric::uar: return "uar";
    case Metric::parsed_rate: return "parsed_rate";
  }
  return "accuracy";
}

std::string_view to_string(UnparsedPolicy policy) {
  return policy == UnparsedPolicy::exclude ? "exclude" : "count_as_incorrect";
}

Metric metric_from_string(std::string_view text) {
  if (text == "accuracy") return Metric::accuracy;
  if (text == "uar") return Metric::uar;
  if (text == "parsed_rate") return Metric::parsed_rate;
  throw InvalidInputError("unknown metric '" + std::string(text) + "'");
}

UnparsedPolicy unparsed_policy_from_string(std::string_view text) {
  if (text == "count_as_incorrect") return UnparsedPolicy::count_as_incorrect;
  if (text == "exclude") return UnparsedPolicy::exclude;
  throw InvalidInputError("unknown unparsed policy '" + std::string(text) + "'");
}

LabelCode encode_label(std::string_view label, const TaskSpec& task) {
  if (label == task.labels()[0]) return 0;
  if (label == task.labels()[1]) return 1;
  throw LabelError("'" + std::string(label) + "' is not a label of task '" + task.key() + "'");
}

LabelCode encode_outcome(const ParseOutcome& outcome, const TaskSpec& task) {
  return outcome.is_parsed() ? encode_label(outcome.label(), task) : kUnparsed;
}

double MetricTally::value(const MetricKind& kind) const {
  const bool exclude = kind.policy == UnparsedPolicy::exclude;
  switch (kind.metric) {
    case Metric::parsed_rate: {
      const std::size_t n = total[0] + total[1];
      if (n == 0) throw UndefinedMetricError("parsed rate of an empty prediction set");
      return static_cast<double>(parsed[0] + parsed[1]) / static_cast<double>(n);
    }
    case Metric::accuracy: {
      const std::size_t denom = exclude ? parsed[0] + parsed[1] : total[0] + total[1];
      if (denom == 0) {
        throw UndefinedMetricError(exclude ? "accuracy undefined: no parsed predictions"
                                           : "accuracy of an empty prediction set");
      }
      return static_cast<double>(correct[0] + correct[1]) / static_cast<double>(denom);
    }
    case Metric::uar: {
      double sum = 0.0;
      for (int c = 0; c < 2; ++c) {
        if (total[c] == 0) throw UndefinedMetricError("UAR undefined: gold class " + std::to_string(c) + " is absent");
        const std::size_t denom = exclude ? parsed[c] : total[c];
        if (denom == 0) {
          throw UndefinedMetricError("UAR undefined: no parsed predictions for gold class " + std::to_string(c));
        }
        sum += static_cast<double>(correct[c]) / static_cast<double>(denom);
      }
      return sum / 2.0;
    }
  }
  return 0.0;
}

namespace {

MetricTally tally_of(std::span<const LabelCode> predictions, std::span<const LabelCode> golds) {
  if (predictions.size() != golds.size()) {
    throw InvalidInputError("prediction/gold mismatch: " + std::to_string(predictions.size()) + " vs " +
                            std::to_string(golds.size()));
  }
  MetricTally t;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (golds[i] != 0 && golds[i] != 1) throw InvalidInputError("gold labels must be parsed label codes");
    t.add(predictions[i], golds[i]);
  }
  return t;
}

unsigned worker_count(unsigned requested, std::size_t work) {
  unsigned n = requested ? requested : std::min(8u, std::max(1u, std::thread::hardware_concurrency()));
  return static_cast<unsigned>(std::clamp<std::size_t>(n, 1, std::max<std::size_t>(work / 256, 1)));
}

// Runs body(begin, end) over [0, n) in contiguous chunks.
template <typename Body>
void parallel_chunks(std::size_t n, unsigned threads, Body body) {
  if (threads <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(n, t * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back([=] { body(begin, end); });
  }
}

}  // namespace

double accuracy(std::span<const LabelCode> predictions, std::span<const LabelCode> golds, UnparsedPolicy policy) {
  return tally_of(predictions, golds).value({Metric::accuracy, policy});
}

double uar(std::span<const LabelCode> predictions, std::span<const LabelCode> golds, UnparsedPolicy policy) {
  return tally_of(predictions, golds).value({Metric::uar, policy});
}

double parsed_rate(std::span<const LabelCode> predictions) {
  if (predictions.empty()) throw UndefinedMetricError("parsed rate of an empty prediction set");
  const auto parsed = std::count_if(predictions.begin(), predictions.end(), [](LabelCode c) { return c != kUnparsed; });
  return static_cast<double>(parsed) / static_cast<double>(predictions.size());
}

double evaluate(const MetricKind& kind, std::span<const LabelCode> predictions, std::span<const LabelCode> golds) {
  if (kind.metric == Metric::parsed_rate) return parsed_rate(predictions);
  return tally_of(predictions, golds).value(kind);
}

std::vector<LabelCode> CodedPool::repeat_column(std::size_t repeat) const {
  std::vector<LabelCode> out(examples);
  for (std::size_t i = 0; i < examples; ++i) out[i] = at(i, repeat);
  return out;
}

CodedPool encode_pool(const PredictionPool& pool, std::span<const LabeledExample> examples, const TaskSpec& task) {
  pool.require_complete();
  if (pool.example_ids.size() != examples.size()) {
    throw InvalidInputError("pool covers " + std::to_string(pool.example_ids.size()) + " examples, dataset has " +
                            std::to_string(examples.size()));
  }
  // Rows follow dataset order so pools stored in different orders stay paired.
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < pool.example_ids.size(); ++i) row_of.emplace(pool.example_ids[i], i);

  CodedPool coded;
  coded.examples = examples.size();
  coded.repeats = pool.repeats;
  coded.codes.reserve(coded.examples * coded.repeats);
  for (const auto& example : examples) {
    auto it = row_of.find(example.id);
    if (it == row_of.end()) throw InvalidInputError("dataset example id '" + example.id + "' not in pool");
    coded.golds.push_back(encode_label(example.gold, task));
    for (const auto& entry : pool.entries[it->second]) coded.codes.push_back(encode_outcome(entry.outcome, task));
  }
  return coded;
}

void MonteCarloConfig::validate() const {
  if (n_samples < 1) throw InvalidInputError("n_samples must be >= 1");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw InvalidInputError("ci_level must lie in (0, 1)");
}

double MetricDistribution::stddev() const {
  if (samples.size() < 2) return 0.0;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  return std::sqrt(ss / static_cast<double>(samples.size() - 1));
}

std::pair<double, double> percentile_interval(std::vector<double> samples, double ci_level) {
  if (samples.empty()) throw InvalidInputError("percentile interval of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double alpha = 1.0 - ci_level;
  const auto n = static_cast<double>(samples.size());
  const auto last = static_cast<long long>(samples.size()) - 1;
  const auto lo = std::clamp(static_cast<long long>(std::floor(alpha / 2.0 * n + 1e-9)), 0LL, last);
  const auto hi = std::clamp(static_cast<long long>(std::ceil((1.0 - alpha / 2.0) * n - 1e-9)) - 1, 0LL, last);
  return {samples[static_cast<std::size_t>(lo)], samples[static_cast<std::size_t>(hi)]};
}

namespace {

void check_pool_shape(const CodedPool& pool) {
  if (pool.repeats == 0 || pool.codes.size() != pool.examples * pool.repeats || pool.golds.size() != pool.examples) {
    throw ShapeError("prediction pool is incomplete");
  }
  if (pool.examples == 0) throw ShapeError("prediction pool is empty");
}

void summarize(MetricDistribution& dist, double ci_level) {
  // Shifted by the first draw so a constant sample set has an exact mean.
  const double anchor = dist.samples.front();
  double offset = 0.0;
  for (double s : dist.samples) offset += s - anchor;
  dist.mean = anchor + offset / static_cast<double>(dist.samples.size());
  std::tie(dist.ci_lower, dist.ci_upper) = percentile_interval(dist.samples, ci_level);
  // Heavily skewed samples can push the mean past an order statistic.
  dist.ci_lower = std::min(dist.ci_lower, dist.mean);
  dist.ci_upper = std::max(dist.ci_upper, dist.mean);
}

}  // namespace

std::vector<std::optional<MetricDistribution>> mc_distributions(const CodedPool& pool,
                                                                std::span<const MetricKind> kinds,
                                                                const MonteCarloConfig& config) {
  config.validate();
  check_pool_shape(pool);

  std::vector<std::vector<double>> samples(kinds.size(), std::vector<double>(config.n_samples));
  std::vector<std::atomic<bool>> undefined(kinds.size());
  parallel_chunks(config.n_samples, worker_count(config.threads, config.n_samples * pool.examples / 64),
                  [&](std::size_t begin, std::size_t end) {
                    for (std::size_t d = begin; d < end; ++d) {
                      RandomStream rng(derive_seed(config.seed, {d}));
                      MetricTally tally;
                      for (std::size_t i = 0; i < pool.examples; ++i) {
                        tally.add(pool.at(i, rng.below(pool.repeats)), pool.golds[i]);
                      }
                      for (std::size_t k = 0; k < kinds.size(); ++k) {
                        try {
                          samples[k][d] = tally.value(kinds[k]);
                        } catch (const UndefinedMetricError&) {
                          undefined[k].store(true, std::memory_order_relaxed);
                        }
                      }
                    }
                  });

  std::vector<std::optional<MetricDistribution>> out(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    if (undefined[k].load()) continue;
    MetricDistribution dist;
    dist.samples = std::move(samples[k]);
    summarize(dist, config.ci_level);
    out[k] = std::move(dist);
  }
  return out;
}

MetricDistribution mc_distribution(const CodedPool& pool, const MetricKind& kind, const MonteCarloConfig& config) {
  config.validate();
  check_pool_shape(pool);
  MetricDistribution dist;
  dist.samples.resize(config.n_samples);
  parallel_chunks(config.n_samples, worker_count(config.threads, config.n_samples * pool.examples / 64),
                  [&](std::size_t begin, std::size_t end) {
                    for (std::size_t d = begin; d < end; ++d) {
                      RandomStream rng(derive_seed(config.seed, {d}));
                      MetricTally tally;
                      for (std::size_t i = 0; i < pool.examples; ++i) {
                        tally.add(pool.at(i, rng.below(pool.repeats)), pool.golds[i]);
                      }
                      dist.samples[d] = tally.value(kind);
                    }
                  });
  summarize(dist, config.ci_level);
  return dist;
}

double exact_expected_accuracy(const CodedPool& pool, UnparsedPolicy policy) {
  check_pool_shape(pool);
  const auto r = static_cast<double>(pool.repeats);

  if (policy == UnparsedPolicy::count_as_incorrect) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pool.examples; ++i) {
      std::size_t hits = 0;
      for (std::size_t k = 0; k < pool.repeats; ++k) hits += pool.at(i, k) == pool.golds[i];
      sum += static_cast<double>(hits) / r;
    }
    return sum / static_cast<double>(pool.examples);
  }

  // prob[p] = P(parsed count = p); weighted[p] = E[correct count * 1{parsed count = p}].
  std::vector<double> prob(pool.examples + 1, 0.0);
  std::vector<double> weighted(pool.examples + 1, 0.0);
  prob[0] = 1.0;
  for (std::size_t i = 0; i < pool.examples; ++i) {
    std::size_t right = 0;
    std::size_t wrong = 0;
    for (std::size_t k = 0; k < pool.repeats; ++k) {
      const LabelCode c = pool.at(i, k);
      if (c == kUnparsed) continue;
      (c == pool.golds[i] ? right : wrong)++;
    }
    const double a = static_cast<double>(right) / r;
    const double q = static_cast<double>(right + wrong) / r;
    for (std::size_t p = i + 1; p >= 1; --p) {
      weighted[p] = weighted[p] * (1.0 - q) + weighted[p - 1] * q + prob[p - 1] * a;
      prob[p] = prob[p] * (1.0 - q) + prob[p - 1] * q;
    }
    weighted[0] *= 1.0 - q;
    prob[0] *= 1.0 - q;
  }
  if (prob[0] > 0.0) throw UndefinedMetricError("accuracy undefined: some resamples have no parsed predictions");
  double expectation = 0.0;
  for (std::size_t p = 1; p <= pool.examples; ++p) expectation += weighted[p] / static_cast<double>(p);
  return expectation;
}

SignificanceResult permutation_test(std::span<const LabelCode> predictions_a, std::span<const LabelCode> predictions_b,
                                    std::span<const LabelCode> golds, const MetricKind& kind,
                                    std::size_t n_permutations, std::uint64_t seed) {
  if (predictions_a.size() != golds.size() || predictions_b.size() != golds.size()) {
    throw InvalidInputError("permutation test inputs are not aligned on the same examples");
  }
  if (n_permutations < 1) throw InvalidInputError("n_permutations must be >= 1");
  const MetricTally tally_a = tally_of(predictions_a, golds);
  const MetricTally tally_b = tally_of(predictions_b, golds);

  SignificanceResult result;
  result.n_permutations = n_permutations;
  result.observed_diff = std::abs(tally_a.value(kind) - tally_b.value(kind));

  // Swapping an example where both systems agree changes nothing.
  std::vector<std::size_t> differing;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions_a[i] != predictions_b[i]) differing.push_back(i);
  }
  if (differing.empty()) {
    result.p_value = 1.0;
    return result;
  }

  constexpr double kTie = 1e-12;
  std::vector<std::size_t> extreme(n_permutations, 0);
  parallel_chunks(n_permutations, worker_count(0, n_permutations * differing.size() / 64),
                  [&](std::size_t begin, std::size_t end) {
                    for (std::size_t p = begin; p < end; ++p) {
                      RandomStream rng(derive_seed(seed, {p}));
                      MetricTally a = tally_a;
                      MetricTally b = tally_b;
                      std::uint64_t bits = 0;
                      for (std::size_t j = 0; j < differing.size(); ++j) {
                        if (j % 64 == 0) bits = rng.next_u64();
                        const bool swap = (bits >> (j % 64)) & 1U;
                        if (!swap) continue;
                        const std::size_t i = differing[j];
                        const LabelCode g = golds[i];
                        // Move example i's prediction from each tally to the other.
                        auto remove = [g](MetricTally& t, LabelCode pred) {
                          if (pred == kUnparsed) return;
                          --t.parsed[g];
                          if (pred == g) --t.correct[g];
                        };
                        auto insert = [g](MetricTally& t, LabelCode pred) {
                          if (pred == kUnparsed) return;
                          ++t.parsed[g];
                          if (pred == g) ++t.correct[g];
                        };
                        remove(a, predictions_a[i]);
                        remove(b, predictions_b[i]);
                        insert(a, predictions_b[i]);
                        insert(b, predictions_a[i]);
                      }
                      double stat;
                      try {
                        stat = std::abs(a.value(kind) - b.value(kind));
                      } catch (const UndefinedMetricError&) {
                        // Undefined permuted metric: counted as extreme, which can only raise p.
                        stat = std::numeric_limits<double>::infinity();
                      }
                      extreme[p] = stat >= result.observed_diff - kTie;
                    }
                  });
  const std::size_t count = std::accumulate(extreme.begin(), extreme.end(), std::size_t{0});
  result.p_value = static_cast<double>(1 + count) / static_cast<double>(n_permutations + 1);
  return result;
}

std::string significance_stars(double p_value) {
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "";
}

}  // namespace promptsense
