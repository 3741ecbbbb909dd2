#include "promptsense/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptsense/error.hpp"

namespace promptsense {

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidInputError("logit vector is empty");
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidInputError("logit vector contains a non-finite value");
  }
}

TokenDistribution::TokenDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvalidInputError("distribution is empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInputError("probability outside [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInputError("probabilities do not sum to 1");
}

std::size_t TokenDistribution::support_size() const noexcept {
  return static_cast<std::size_t>(std::count_if(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; }));
}

std::size_t TokenDistribution::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

void SamplingParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidInputError("temperature must be a finite value >= 0");
  }
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw InvalidInputError("top_p must lie in [0, 1]");
}

namespace {

std::vector<double> normalized_exp(std::span<const double> scaled) {
  const double peak = *std::max_element(scaled.begin(), scaled.end());
  std::vector<double> out(scaled.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    out[i] = std::exp(scaled[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> one_hot(std::size_t n, std::size_t at) {
  std::vector<double> out(n, 0.0);
  out[at] = 1.0;
  return out;
}

}  // namespace

TokenDistribution softmax(const LogitVector& logits) { return TokenDistribution(normalized_exp(logits.values())); }

TokenDistribution apply_temperature(const LogitVector& logits, double temperature) {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidInputError("temperature must be a finite value >= 0");
  }
  auto values = logits.values();
  if (temperature == 0.0) {
    const auto top = std::max_element(values.begin(), values.end()) - values.begin();
    return TokenDistribution(one_hot(values.size(), static_cast<std::size_t>(top)));
  }
  if (temperature == 1.0) return softmax(logits);
  std::vector<double> scaled(values.begin(), values.end());
  for (double& v : scaled) v /= temperature;
  if (!std::all_of(scaled.begin(), scaled.end(), [](double v) { return std::isfinite(v); })) {
    // Temperature so small that scaling overflowed; the greedy limit is the exact answer.
    return apply_temperature(logits, 0.0);
  }
  return TokenDistribution(normalized_exp(scaled));
}

TokenDistribution nucleus_filter(const TokenDistribution& dist, double top_p) {
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw InvalidInputError("top_p must lie in [0, 1]");
  auto probs = dist.probs();
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

  // Prefix length: first point where the cumulative mass strictly exceeds top_p, else the
  // full support.
  std::size_t keep = dist.support_size();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    cumulative += probs[order[i]];
    if (cumulative > top_p) {
      keep = i + 1;
      break;
    }
  }

  std::vector<double> out(probs.size(), 0.0);
  double kept_mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept_mass += probs[order[i]];
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = probs[order[i]] / kept_mass;
  return TokenDistribution(std::move(out));
}

std::size_t sample_token(const TokenDistribution& dist, RandomStream& rng) {
  const double u = rng.uniform();
  auto probs = dist.probs();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  // Rounding left the total slightly below 1.
  return last_positive;
}

TokenDistribution shape_distribution(const LogitVector& logits, const SamplingParams& params) {
  params.validate();
  return nucleus_filter(apply_temperature(logits, params.temperature), params.top_p);
}

std::vector<TokenId> generate_sequence(const SimulatedModel& model, std::span<const TokenId> context,
                                       const SamplingParams& params, RandomStream& rng) {
  params.validate();
  for (TokenId t : context) {
    if (t >= model.vocab.size()) throw InvalidInputError("context token " + std::to_string(t) + " is not in the vocabulary");
  }
  std::vector<TokenId> sequence(context.begin(), context.end());
  std::vector<TokenId> continuation;
  while (continuation.size() < model.max_len) {
    LogitVector logits = model.logit_fn(sequence);
    if (logits.size() != model.vocab.size()) throw InvalidInputError("logit_fn returned a vector of the wrong size");
    const TokenId next = sample_token(shape_distribution(logits, params), rng);
    if (next == model.stop_token) break;
    continuation.push_back(next);
    sequence.push_back(next);
  }
  return continuation;
}

}  // namespace promptsense
