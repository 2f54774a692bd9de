#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "margin/rng.hpp"

namespace margin {

struct MetricSummary {
  double mean = 0.0;
  double stdev = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

inline double sample_std(std::span<const double> xs) {
  return std::sqrt(sample_variance(xs));
}

// Nearest-rank percentile on a sorted sample: index round(q * (n - 1)).
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  const auto n = static_cast<std::int64_t>(sorted.size());
  auto idx = static_cast<std::int64_t>(std::llround(q * static_cast<double>(n - 1)));
  idx = std::clamp<std::int64_t>(idx, 0, n - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("pearson needs two equal samples of size >= 2");
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// OLS slope of y against x = 0, 1, ..., n-1.
inline double ols_slope(std::span<const double> ys) {
  const auto n = static_cast<double>(ys.size());
  if (ys.size() < 2) return 0.0;
  const double mx = (n - 1.0) / 2.0;
  const double my = mean(ys);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double dx = static_cast<double>(i) - mx;
    num += dx * (ys[i] - my);
    den += dx * dx;
  }
  return num / den;
}

// Percentile-bootstrap 95% CI for the mean of one sample.
inline MetricSummary summarize(std::span<const double> values, std::int64_t resamples,
                               std::uint64_t seed) {
  MetricSummary out;
  out.mean = mean(values);
  out.stdev = sample_std(values);
  if (values.size() < 2) {
    out.ci_low = out.ci_high = out.mean;
    return out;
  }
  Rng rng(seed);
  const std::size_t n = values.size();
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += values[rng.uniform_below(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  out.ci_low = percentile_sorted(means, 0.025);
  out.ci_high = percentile_sorted(means, 0.975);
  return out;
}

}  // namespace margin
