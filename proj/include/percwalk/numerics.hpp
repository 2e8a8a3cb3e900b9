#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace percwalk {

/// Pairwise (cascade) summation. The result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      carry_ += (sum_ - t) + x;
    else
      carry_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// log(sum exp(v)); -inf for an empty input.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  std::vector<double> shifted(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) shifted[i] = std::exp(v[i] - m);
  return m + std::log(pairwise_sum(shifted));
}

struct SampleMoments {
  double mean = 0.0;
  double variance = 0.0;  ///< unbiased
  std::size_t count = 0;
  double stderr_of_mean() const noexcept {
    return count > 1 ? std::sqrt(variance / static_cast<double>(count)) : 0.0;
  }
};

/// Two-pass mean and unbiased variance with pairwise sums.
inline SampleMoments moments(std::span<const double> v) {
  SampleMoments m;
  m.count = v.size();
  if (v.empty()) return m;
  m.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() > 1) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m.mean) * (v[i] - m.mean);
    m.variance = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
  }
  return m;
}

}  // namespace percwalk
