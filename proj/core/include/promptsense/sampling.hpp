#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "promptsense/random.hpp"

namespace promptsense {

/// Unnormalized log-scores, one per vocabulary token. Non-empty and finite.
class LogitVector {
 public:
  explicit LogitVector(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

/// A probability vector over the vocabulary. Entries lie in [0, 1] and sum to 1 within 1e-9.
class TokenDistribution {
 public:
  explicit TokenDistribution(std::vector<double> probs);

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  /// Number of strictly positive entries.
  std::size_t support_size() const noexcept;
  /// Index of the largest probability, lowest index on ties.
  std::size_t argmax() const noexcept;

 private:
  std::vector<double> probs_;
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;

  /// Throws InvalidInputError unless temperature >= 0 and 0 <= top_p <= 1.
  void validate() const;
};

TokenDistribution softmax(const LogitVector& logits);

/// Softmax of logits / temperature. temperature == 0 is the greedy limit: a one-hot
/// distribution at the first maximal logit.
TokenDistribution apply_temperature(const LogitVector& logits, double temperature);

/// Keeps the smallest descending-probability prefix whose cumulative mass strictly exceeds
/// top_p (the whole support if none does) and renormalizes it. Equal probabilities are
/// ordered by token index.
TokenDistribution nucleus_filter(const TokenDistribution& dist, double top_p);

/// Inverse-CDF draw over the entries in index order. Consumes exactly one value from rng.
std::size_t sample_token(const TokenDistribution& dist, RandomStream& rng);

/// Temperature first, then nucleus filtering.
TokenDistribution shape_distribution(const LogitVector& logits, const SamplingParams& params);

using TokenId = std::size_t;

/// Offline auto-regressive stand-in for a language model.
struct SimulatedModel {
  std::vector<std::string> vocab;
  /// Must be pure: the same context always yields the same logits.
  std::function<LogitVector(std::span<const TokenId>)> logit_fn;
  TokenId stop_token = 0;
  std::size_t max_len = 32;
};

/// Samples tokens after context until the stop token is drawn or max_len tokens have been
/// generated. The returned continuation excludes the stop token.
std::vector<TokenId> generate_sequence(const SimulatedModel& model, std::span<const TokenId> context,
                                       const SamplingParams& params, RandomStream& rng);

}  // namespace promptsense
