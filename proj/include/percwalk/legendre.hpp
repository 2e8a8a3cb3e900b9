#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "percwalk/chain.hpp"
#include "percwalk/error.hpp"

namespace percwalk {

/// Lambda sampled on a uniform tensor grid theta_i = lo + k h, k = 0..points-1
/// on every axis. Values are stored with axis 0 varying slowest.
struct LambdaGrid {
  int dim = 0;
  double lo = 0.0;
  double step = 0.0;
  int points = 0;
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }

  std::vector<double> theta(std::size_t index) const {
    std::vector<double> t(dim);
    for (int i = dim - 1; i >= 0; --i) {
      t[i] = lo + step * static_cast<double>(index % points);
      index /= points;
    }
    return t;
  }

  std::vector<int> multi_index(std::size_t index) const {
    std::vector<int> k(dim);
    for (int i = dim - 1; i >= 0; --i) {
      k[i] = static_cast<int>(index % points);
      index /= points;
    }
    return k;
  }

  std::size_t flat(const std::vector<int>& k) const {
    std::size_t index = 0;
    for (int i = 0; i < dim; ++i) index = index * points + static_cast<std::size_t>(k[i]);
    return index;
  }

  /// Evaluate Lambda at every grid point.
  static LambdaGrid build(int dim, double lo, double hi, int points,
                          const std::function<double(const std::vector<double>&)>& lambda) {
    detail::require(dim >= 1 && points >= 3 && hi > lo, "grid needs >= 3 points per axis");
    LambdaGrid grid;
    grid.dim = dim;
    grid.lo = lo;
    grid.step = (hi - lo) / (points - 1);
    grid.points = points;
    std::size_t total = 1;
    for (int i = 0; i < dim; ++i) total *= static_cast<std::size_t>(points);
    grid.values.resize(total);
    for (std::size_t k = 0; k < total; ++k) grid.values[k] = lambda(grid.theta(k));
    return grid;
  }

  /// Largest second difference along any axis (curvature bound for the error estimate).
  double curvature_bound() const {
    double c = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      auto idx = multi_index(k);
      for (int i = 0; i < dim; ++i) {
        if (idx[i] == 0 || idx[i] == points - 1) continue;
        auto lo_idx = idx, hi_idx = idx;
        --lo_idx[i];
        ++hi_idx[i];
        const double d2 = (values[flat(hi_idx)] - 2.0 * values[k] + values[flat(lo_idx)]) / (step * step);
        c = std::max(c, d2);
      }
    }
    return c;
  }

  /// Worst violation of midpoint convexity along grid lines (negative part).
  double convexity_violation() const {
    double worst = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      auto idx = multi_index(k);
      for (int i = 0; i < dim; ++i) {
        if (idx[i] == 0 || idx[i] == points - 1) continue;
        auto lo_idx = idx, hi_idx = idx;
        --lo_idx[i];
        ++hi_idx[i];
        worst = std::max(worst, values[k] - 0.5 * (values[flat(lo_idx)] + values[flat(hi_idx)]));
      }
    }
    return worst;
  }
};

struct LegendreValue {
  ExtendedReal value;
  std::vector<double> argmax;  ///< maximizing theta (empty when infinite)
  double error_bound = 0.0;
};

inline double l1(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

/// J(x) = sup over grid points of theta . x - Lambda(theta).
///
/// Velocities with |x|_1 > 1 are unreachable by unit steps and give an infinite
/// value. The reported error bound is h |x|_1 + d h^2 C / 8 with C the largest
/// second difference of Lambda on the grid. A maximizer on the grid boundary
/// raises GridTooSmall.
inline LegendreValue legendre_level1(const LambdaGrid& grid, const std::vector<double>& x) {
  detail::require(static_cast<int>(x.size()) == grid.dim, "velocity dimension mismatch");
  LegendreValue out;
  if (l1(x) > 1.0) {
    out.value = ExtendedReal::infinity();
    return out;
  }
  double best = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto t = grid.theta(k);
    double v = -grid.values[k];
    for (int i = 0; i < grid.dim; ++i) v += t[i] * x[i];
    if (v > best) {
      best = v;
      arg = k;
    }
  }
  const auto idx = grid.multi_index(arg);
  for (int i = 0; i < grid.dim; ++i)
    if (idx[i] == 0 || idx[i] == grid.points - 1)
      throw GridTooSmall("Legendre sup attained on the grid boundary");
  out.value = ExtendedReal::finite(std::max(0.0, best));
  out.argmax = grid.theta(arg);
  out.error_bound = grid.step * l1(x) + grid.dim * grid.step * grid.step * grid.curvature_bound() / 8.0;
  return out;
}

/// Grid value refined by Newton steps on theta . x - Lambda(theta) with
/// central finite differences of a Lambda oracle.
inline LegendreValue legendre_refined(const LambdaGrid& grid,
                                      const std::function<double(const std::vector<double>&)>& lambda,
                                      const std::vector<double>& x, double fd_step = 1e-4,
                                      int max_steps = 50) {
  LegendreValue out = legendre_level1(grid, x);
  if (out.value.infinite) return out;
  const int d = grid.dim;
  std::vector<double> theta = out.argmax;
  auto objective = [&](const std::vector<double>& t) {
    double v = -lambda(t);
    for (int i = 0; i < d; ++i) v += t[i] * x[i];
    return v;
  };
  double current = objective(theta);
  for (int it = 0; it < max_steps; ++it) {
    Eigen::VectorXd grad(d);
    Eigen::MatrixXd hess(d, d);
    const double h = fd_step;
    for (int i = 0; i < d; ++i) {
      auto tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fp = objective(tp), fm = objective(tm);
      grad[i] = (fp - fm) / (2 * h);
      hess(i, i) = (fp - 2 * current + fm) / (h * h);
      for (int j = 0; j < i; ++j) {
        auto tpp = theta, tpm = theta, tmp = theta, tmm = theta;
        tpp[i] += h; tpp[j] += h;
        tpm[i] += h; tpm[j] -= h;
        tmp[i] -= h; tmp[j] += h;
        tmm[i] -= h; tmm[j] -= h;
        hess(i, j) = hess(j, i) =
            (objective(tpp) - objective(tpm) - objective(tmp) + objective(tmm)) / (4 * h * h);
      }
    }
    Eigen::VectorXd step = -hess.ldlt().solve(grad);
    if (!step.allFinite() || grad.dot(step) <= 0.0) step = grad * 0.1;
    double t = 1.0;
    bool moved = false;
    while (t > 1e-8) {
      auto trial = theta;
      for (int i = 0; i < d; ++i) trial[i] += t * step[i];
      const double v = objective(trial);
      if (v >= current) {
        theta = trial;
        const double gain = v - current;
        current = v;
        moved = true;
        if (gain < 1e-15) it = max_steps;
        break;
      }
      t *= 0.5;
    }
    if (!moved || step.norm() < 1e-10) break;
  }
  out.value = ExtendedReal::finite(std::max(0.0, current));
  out.argmax = theta;
  out.error_bound = 0.0;
  return out;
}

struct PsiReport {
  std::vector<double> lambdas;
  std::vector<double> ratios;  ///< psi(lambda) / lambda
  double max_violation = 0.0;  ///< largest decrease between consecutive ratios
  bool monotone = true;
};

/// psi(lambda) / lambda for the log-MGF of a weighted finite sample (uniform
/// weights when `weights` is empty); nondecreasing up to `tolerance`.
inline PsiReport psi_monotonicity_check(std::span<const double> samples,
                                        std::span<const double> lambdas,
                                        std::span<const double> weights = {},
                                        double tolerance = 1e-9) {
  detail::require(!samples.empty(), "psi check needs samples");
  detail::require(weights.empty() || weights.size() == samples.size(), "weights size mismatch");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    detail::require(lambdas[i] > 0.0, "lambda grid must be positive");
    if (i > 0) detail::require(lambdas[i] > lambdas[i - 1], "lambda grid must increase");
  }
  double wsum = 0.0;
  std::vector<double> logw(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double w = weights.empty() ? 1.0 : weights[k];
    detail::require(w >= 0.0, "weights must be >= 0");
    wsum += w;
    logw[k] = std::log(w);
  }
  PsiReport report;
  std::vector<double> terms(samples.size());
  for (double lam : lambdas) {
    for (std::size_t k = 0; k < samples.size(); ++k) terms[k] = logw[k] + lam * samples[k];
    const double psi = log_sum_exp(terms) - std::log(wsum);
    report.lambdas.push_back(lam);
    report.ratios.push_back(psi / lam);
  }
  for (std::size_t i = 1; i < report.ratios.size(); ++i)
    report.max_violation = std::max(report.max_violation, report.ratios[i - 1] - report.ratios[i]);
  report.monotone = report.max_violation <= tolerance;
  return report;
}

}  // namespace percwalk
