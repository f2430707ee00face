#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "morphgen/error.hpp"

namespace morphgen {

class UndefinedCorrelationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// 1-based ranks; tied values share the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 hold ranks i+1..j
    const double shared = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = shared;
    i = j;
  }
  return ranks;
}

// Spearman's rho as the Pearson correlation of average-rank vectors.
inline double spearman_rho(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw ValidationError("spearman_rho: length mismatch (" + std::to_string(xs.size()) + " vs " +
                          std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 2) throw ValidationError("spearman_rho: need at least 2 paired observations");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw ValidationError("spearman_rho: non-finite value");
  }

  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(rx.size());
  const double mean = (n + 1.0) / 2.0;  // mean of any average-rank vector

  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelationError("spearman_rho: zero rank variance, correlation undefined");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
  return spearman_rho(std::span<const double>(xs), std::span<const double>(ys));
}

}  // namespace morphgen
