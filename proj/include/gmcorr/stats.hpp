#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace gmcorr {

/// Pairwise summation in index order. The result depends only on the input
/// sequence, never on how the values were produced.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct MeanEstimate {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double standard_error = std::numeric_limits<double>::quiet_NaN();  // NaN for n < 2
  std::size_t n = 0;

  bool se_defined() const { return n >= 2; }
};

/// Sample mean and standard error (sample std / sqrt(n)).
inline MeanEstimate estimate_mean(std::span<const double> v) {
  MeanEstimate e;
  e.n = v.size();
  if (v.empty()) return e;
  e.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() < 2) return e;
  std::vector<double> sq(v.size());
  std::transform(v.begin(), v.end(), sq.begin(), [&](double x) { return (x - e.mean) * (x - e.mean); });
  const double var = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
  e.standard_error = std::sqrt(var / static_cast<double>(v.size()));
  return e;
}

/// Asymptotic Kolmogorov distribution: P(K > x).
inline double kolmogorov_survival(double x) {
  if (x <= 0.0) return 1.0;
  if (x < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic;
  double p_value;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
template <class Cdf>
KsResult ks_test(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sqn = std::sqrt(n);
  return {d, kolmogorov_survival((sqn + 0.12 + 0.11 / sqn) * d)};
}

}  // namespace gmcorr
