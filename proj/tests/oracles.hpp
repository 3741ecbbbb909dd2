#pragma once

// Brute-force reference implementations, written from the metric definitions and kept
// independent of the library code.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace oracle {

enum class Policy { incorrect, exclude };

// codes: 0/1 label index, -1 unparsed
inline std::optional<double> accuracy(const std::vector<int>& pred, const std::vector<int>& gold, Policy policy) {
  double right = 0, denom = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i] < 0 && policy == Policy::exclude) continue;
    denom += 1;
    right += pred[i] == gold[i];
  }
  if (denom == 0) return std::nullopt;
  return right / denom;
}

inline std::optional<double> uar(const std::vector<int>& pred, const std::vector<int>& gold, Policy policy) {
  double recall_sum = 0;
  for (int c = 0; c < 2; ++c) {
    double right = 0, denom = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i] != c) continue;
      if (pred[i] < 0 && policy == Policy::exclude) continue;
      denom += 1;
      right += pred[i] == gold[i];
    }
    if (denom == 0) return std::nullopt;
    recall_sum += right / denom;
  }
  return recall_sum / 2;
}

inline std::optional<double> parsed_rate(const std::vector<int>& pred) {
  if (pred.empty()) return std::nullopt;
  double n = 0;
  for (int p : pred) n += p >= 0;
  return n / pred.size();
}

// Mean of the metric over all R^N dataset predictions (one repeat per example).
// pool[i][r] is the code of example i, repeat r.
template <typename Metric>
double enumerate_mean(const std::vector<std::vector<int>>& pool, const std::vector<int>& gold, Metric metric) {
  const std::size_t n = pool.size();
  const std::size_t r = pool.at(0).size();
  std::vector<std::size_t> pick(n, 0);
  std::vector<int> pred(n);
  double sum = 0, count = 0;
  while (true) {
    for (std::size_t i = 0; i < n; ++i) pred[i] = pool[i][pick[i]];
    const auto v = metric(pred, gold);
    if (!v) throw std::domain_error("metric undefined for some dataset prediction");
    sum += *v;
    count += 1;
    std::size_t i = 0;
    while (i < n && ++pick[i] == r) pick[i++] = 0;
    if (i == n) break;
  }
  return sum / count;
}

// Exact two-tailed paired permutation p over all 2^N swap patterns.
template <typename Metric>
double exact_permutation_p(const std::vector<int>& a, const std::vector<int>& b, const std::vector<int>& gold,
                           Metric metric) {
  const std::size_t n = gold.size();
  const double observed = std::abs(*metric(a, gold) - *metric(b, gold));
  std::uint64_t extreme = 0;
  std::vector<int> pa(n), pb(n);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    for (std::size_t i = 0; i < n; ++i) {
      const bool swap = (mask >> i) & 1;
      pa[i] = swap ? b[i] : a[i];
      pb[i] = swap ? a[i] : b[i];
    }
    const double stat = std::abs(*metric(pa, gold) - *metric(pb, gold));
    extreme += stat >= observed - 1e-9;
  }
  return static_cast<double>(extreme) / static_cast<double>(std::uint64_t{1} << n);
}

}  // namespace oracle
