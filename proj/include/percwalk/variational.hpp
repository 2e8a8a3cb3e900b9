#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "percwalk/chain.hpp"

namespace percwalk {

struct VariationalOptions {
  double tolerance = 1e-10;  ///< stop when the objective moves less than this
  std::size_t max_iterations = 200;
};

struct VariationalResult {
  double value = 0.0;        ///< <f, mu> - I(mu) at the returned measure
  EdgeTable mu;              ///< optimal pair measure
  MeasureKernelPair pair;    ///< its kernel and density
  std::vector<double> bias;  ///< relative value h with h(0) = 0
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

struct PolicyEvaluation {
  double gain = 0.0;
  std::vector<double> bias;
};

/// Solve gain + h(x) = r(x) + sum_y P(x, y) h(y) with h(0) = 0.
inline PolicyEvaluation evaluate_policy(const EdgeTable& kernel, const std::vector<double>& reward,
                                        const EnvironmentChain& chain) {
  const std::size_t n = chain.size();
  PolicyEvaluation out;
  out.bias.assign(n, 0.0);
  if (n == 1) {
    out.gain = reward[0];
    return out;
  }
  // Rows x >= 1 give K h = r - gain 1 on the killed system; row 0 fixes the gain.
  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(killed_generator(kernel, chain));
  if (lu.info() != Eigen::Success) throw Error("policy evaluation: factorization failed");
  const auto m = static_cast<Eigen::Index>(n - 1);
  Eigen::MatrixXd rhs(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) {
    rhs(i, 0) = reward[static_cast<std::size_t>(i + 1)];
    rhs(i, 1) = 1.0;
  }
  const Eigen::MatrixXd sol = lu.solve(rhs);
  double num = reward[0], den = 1.0;
  for (int dir = 0; dir < chain.dirs(); ++dir) {
    if (!chain.open(0, dir)) continue;
    const std::size_t y = chain.next(0, dir);
    if (y == 0) continue;
    num += kernel(0, dir) * sol(static_cast<Eigen::Index>(y - 1), 0);
    den += kernel(0, dir) * sol(static_cast<Eigen::Index>(y - 1), 1);
  }
  out.gain = num / den;
  for (std::size_t s = 1; s < n; ++s)
    out.bias[s] = sol(static_cast<Eigen::Index>(s - 1), 0) -
                  out.gain * sol(static_cast<Eigen::Index>(s - 1), 1);
  return out;
}

/// Per-state reward sum_e k(x, e) (f(x, e) - log(k(x, e) / pi(x, e))).
inline std::vector<double> entropic_reward(const EdgeTable& kernel, const EdgeTable& f,
                                           const EnvironmentChain& chain) {
  std::vector<double> r(chain.size(), 0.0);
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      const double k = kernel(s, dir);
      if (k > 0.0) r[s] += k * (f(s, dir) - std::log(k / chain.pi(s, dir)));
    }
  return r;
}

}  // namespace detail

/// sup over invariant (kernel, density) pairs of <f, mu> - I(mu).
///
/// Soft policy iteration: evaluate the average-reward equation of the current
/// kernel, then re-tilt the walk kernel by exp(f + h(next)). The gain of each
/// kernel equals the objective at its stationary pair measure and increases
/// monotonically.
inline VariationalResult variational_sup(const EnvironmentChain& chain, const EdgeTable& f,
                                         const VariationalOptions& options = {}) {
  detail::require(f.states == chain.size() && f.dirs == chain.dirs(),
                  "function shape does not match the chain");
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      detail::require(!chain.open(s, dir) || std::isfinite(f(s, dir)), "f must be finite");
  VariationalResult result;
  EdgeTable kernel = chain.srw().table();
  double previous = -std::numeric_limits<double>::infinity();
  detail::PolicyEvaluation eval;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    eval = detail::evaluate_policy(kernel, detail::entropic_reward(kernel, f, chain), chain);
    result.iterations = it + 1;
    if (std::abs(eval.gain - previous) < options.tolerance) {
      result.converged = true;
      break;
    }
    previous = eval.gain;
    EdgeTable improved = chain.table();
    for (std::size_t s = 0; s < chain.size(); ++s) {
      double m = -std::numeric_limits<double>::infinity();
      for (int dir = 0; dir < chain.dirs(); ++dir)
        if (chain.open(s, dir))
          m = std::max(m, std::log(chain.pi(s, dir)) + f(s, dir) + eval.bias[chain.next(s, dir)]);
      double total = 0.0;
      for (int dir = 0; dir < chain.dirs(); ++dir) {
        if (!chain.open(s, dir)) continue;
        improved(s, dir) =
            std::exp(std::log(chain.pi(s, dir)) + f(s, dir) + eval.bias[chain.next(s, dir)] - m);
        total += improved(s, dir);
      }
      for (int dir = 0; dir < chain.dirs(); ++dir) improved(s, dir) /= total;
    }
    kernel = std::move(improved);
  }
  result.value = eval.gain;
  result.bias = std::move(eval.bias);
  result.pair.kernel = kernel;
  result.pair.phi = stationary_density(kernel, chain);
  result.mu = chain.table();
  const double n = static_cast<double>(chain.size());
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      result.mu(s, dir) = result.pair.phi[s] * kernel(s, dir) / n;
  return result;
}

}  // namespace percwalk
