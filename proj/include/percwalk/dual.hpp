#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "percwalk/chain.hpp"

namespace percwalk {

/// L(g, x) = log sum_e pi(x, e) exp(f(x, e) + g(x) - g(x + e)).
inline std::vector<double> tilted_log_sums(const EnvironmentChain& chain, const EdgeTable& f,
                                           const std::vector<double>& g) {
  std::vector<double> out(chain.size());
  for (std::size_t s = 0; s < chain.size(); ++s) {
    double m = -std::numeric_limits<double>::infinity();
    double a[32];
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      a[dir] = -std::numeric_limits<double>::infinity();
      if (!chain.open(s, dir)) continue;
      a[dir] = std::log(chain.pi(s, dir)) + f(s, dir) + g[s] - g[chain.next(s, dir)];
      m = std::max(m, a[dir]);
    }
    double total = 0.0;
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir)) total += std::exp(a[dir] - m);
    out[s] = m + std::log(total);
  }
  return out;
}

/// Lambda(f, G) = max_x log sum_e pi(x, e) exp(f(x, e) + G(x, e)).
inline double upper_bound_Lambda(const EnvironmentChain& chain, const EdgeTable& f,
                                 const EdgeTable& G) {
  detail::require(G.states == chain.size() && G.dirs == chain.dirs(),
                  "gradient field shape does not match the chain");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < chain.size(); ++s) {
    double m = -std::numeric_limits<double>::infinity();
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir)) m = std::max(m, std::log(chain.pi(s, dir)) + f(s, dir) + G(s, dir));
    double total = 0.0;
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir))
        total += std::exp(std::log(chain.pi(s, dir)) + f(s, dir) + G(s, dir) - m);
    best = std::max(best, m + std::log(total));
  }
  return best;
}

/// G(x, e) = g(x) - g(x + e) on open directions, 0 elsewhere.
inline EdgeTable gradient_from_potential(const EnvironmentChain& chain, const std::vector<double>& g) {
  detail::require(g.size() == chain.size(), "potential size does not match the chain");
  EdgeTable G = chain.table();
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir)) G(s, dir) = g[s] - g[chain.next(s, dir)];
  return G;
}

struct PenalizedEvaluation {
  double value = 0.0;             ///< eps log mean exp(L / eps)
  std::vector<double> gradient;   ///< w - Q^T w
  std::vector<double> log_sums;   ///< L(g, x)
  std::vector<double> weights;    ///< w = softmax(L / eps)
};

/// The entropy-penalized functional J_eps(g) = eps log E[exp(L(g, .) / eps)]
/// under the uniform reference measure, with its gradient in g.
inline PenalizedEvaluation penalized_functional(const EnvironmentChain& chain, const EdgeTable& f,
                                                const std::vector<double>& g, double eps) {
  detail::require(eps > 0.0 && std::isfinite(eps), "eps must be positive");
  detail::require(g.size() == chain.size(), "potential size does not match the chain");
  PenalizedEvaluation ev;
  ev.log_sums = tilted_log_sums(chain, f, g);
  const std::size_t n = chain.size();
  std::vector<double> scaled(n);
  for (std::size_t s = 0; s < n; ++s) scaled[s] = ev.log_sums[s] / eps;
  const double lse = log_sum_exp(scaled);
  ev.value = eps * (lse - std::log(static_cast<double>(n)));
  ev.weights.resize(n);
  for (std::size_t s = 0; s < n; ++s) ev.weights[s] = std::exp(scaled[s] - lse);
  ev.gradient = ev.weights;
  for (std::size_t s = 0; s < n; ++s) {
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      if (!chain.open(s, dir)) continue;
      const double q = std::exp(std::log(chain.pi(s, dir)) + f(s, dir) + g[s] -
                                g[chain.next(s, dir)] - ev.log_sums[s]);
      ev.gradient[chain.next(s, dir)] -= ev.weights[s] * q;
    }
  }
  return ev;
}

struct DualOptions {
  std::vector<double> schedule = {1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001,
                                  3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6};
  std::size_t max_newton = 200;   ///< per stage
  double gradient_tolerance = 1e-13;
  std::optional<double> reference;  ///< lower-bound value used for gap reports
};

struct DualStage {
  double eps = 0.0;
  double penalized_value = 0.0;
  double value = 0.0;  ///< max_x L(g, x)
  std::optional<double> gap;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;  ///< l1
  bool converged = false;
};

struct DualResult {
  double value = 0.0;            ///< Lambda(f, G) at the final stage, an upper bound
  double penalized_value = 0.0;  ///< J_eps at the final stage, a lower bound
  std::vector<double> g;         ///< mean-zero potential
  EdgeTable G;                   ///< g(x) - g(x + e)
  std::vector<DualStage> stages;
  std::optional<double> gap;     ///< value - reference
  bool converged = false;
};

namespace detail {

/// Newton direction for J_eps on coordinates 1..N-1 (g(0) held fixed).
///
/// The Hessian is S - (1/eps) grad grad^T with S sparse; the rank-one part is
/// removed with Sherman-Morrison. Returns nullopt when S cannot be factorized.
/// Cached symbolic factorization; the sparsity pattern depends only on the chain.
struct NewtonWorkspace {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analyzed = false;
};

inline std::optional<std::vector<double>> newton_direction(const EnvironmentChain& chain,
                                                           const EdgeTable& f,
                                                           const std::vector<double>& g,
                                                           const PenalizedEvaluation& ev,
                                                           double eps, NewtonWorkspace& work) {
  const std::size_t n = chain.size();
  const int dirs = chain.dirs();
  const double c = 1.0 / eps;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(n * 32);
  // Zeros are kept so that every call produces the same pattern.
  auto put = [&](std::size_t i, std::size_t j, double v) {
    if (i == 0 || j == 0) return;
    t.emplace_back(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1), v);
  };
  std::vector<std::size_t> ys;
  std::vector<double> qs;
  for (std::size_t x = 0; x < n; ++x) {
    const double w = ev.weights[x];
    ys.clear();
    qs.clear();
    for (int dir = 0; dir < dirs; ++dir) {
      if (!chain.open(x, dir)) continue;
      const std::size_t y = chain.next(x, dir);
      const double q = std::exp(std::log(chain.pi(x, dir)) + f(x, dir) + g[x] - g[y] - ev.log_sums[x]);
      auto it = std::find(ys.begin(), ys.end(), y);
      if (it == ys.end()) {
        ys.push_back(y);
        qs.push_back(q);
      } else {
        qs[static_cast<std::size_t>(it - ys.begin())] += q;
      }
    }
    // w [diag(q) - q q^T] + c w [e_x - q][e_x - q]^T
    put(x, x, c * w);
    for (std::size_t a = 0; a < ys.size(); ++a) {
      put(ys[a], ys[a], w * qs[a]);
      put(x, ys[a], -c * w * qs[a]);
      put(ys[a], x, -c * w * qs[a]);
      for (std::size_t b = 0; b < ys.size(); ++b) put(ys[a], ys[b], (c - 1.0) * w * qs[a] * qs[b]);
    }
  }
  const auto m = static_cast<Eigen::Index>(n - 1);
  Eigen::SparseMatrix<double> s(m, m);
  s.setFromTriplets(t.begin(), t.end());
  double max_diag = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) max_diag = std::max(max_diag, s.coeff(i, i));
  Eigen::VectorXd a(m);
  for (Eigen::Index i = 0; i < m; ++i) a[i] = ev.gradient[static_cast<std::size_t>(i + 1)];

  auto& ldlt = work.ldlt;
  if (!work.analyzed) {
    ldlt.analyzePattern(s);
    work.analyzed = true;
  }
  double ridge = 0.0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Eigen::SparseMatrix<double> shifted = s;
    if (ridge > 0.0)
      for (Eigen::Index i = 0; i < m; ++i) shifted.coeffRef(i, i) += ridge;
    ldlt.factorize(shifted);
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      const auto& d = ldlt.vectorD();
      for (Eigen::Index i = 0; i < m && ok; ++i) ok = d[i] > 0.0;
    }
    if (ok) {
      const Eigen::VectorXd x2 = ldlt.solve(a);
      const double denom = 1.0 - c * a.dot(x2);
      const double scale = denom > 1e-12 ? 1.0 / denom : 1.0;
      std::vector<double> dir(n, 0.0);
      for (Eigen::Index i = 0; i < m; ++i) dir[static_cast<std::size_t>(i + 1)] = -scale * x2[i];
      return dir;
    }
    ridge = ridge == 0.0 ? 1e-14 * std::max(max_diag, 1.0) : ridge * 100.0;
  }
  return std::nullopt;
}

inline double l1_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

}  // namespace detail

/// Minimize J_eps over potentials g for each eps of a decreasing schedule,
/// warm-starting each stage from the previous minimizer.
///
/// Each stage runs damped Newton steps with Armijo backtracking (a plain
/// gradient step when the Newton direction fails). The returned value is the
/// certified upper bound Lambda(f, G) = max_x L(g, x); the penalized value J_eps
/// is a lower bound on the same variational value.
inline DualResult dual_penalized_solver(const EnvironmentChain& chain, const EdgeTable& f,
                                        const DualOptions& options = {}) {
  detail::require(f.states == chain.size() && f.dirs == chain.dirs(),
                  "function shape does not match the chain");
  detail::require(!options.schedule.empty(), "eps schedule must not be empty");
  for (std::size_t i = 0; i < options.schedule.size(); ++i) {
    detail::require(options.schedule[i] > 0.0, "eps values must be positive");
    if (i > 0)
      detail::require(options.schedule[i] < options.schedule[i - 1], "eps schedule must decrease");
  }
  const std::size_t n = chain.size();
  DualResult result;
  std::vector<double> g(n, 0.0);
  result.converged = true;
  detail::NewtonWorkspace work;

  for (double eps : options.schedule) {
    DualStage stage;
    stage.eps = eps;
    auto ev = penalized_functional(chain, f, g, eps);
    for (std::size_t it = 0; it < options.max_newton; ++it) {
      const double gnorm = detail::l1_norm(ev.gradient);
      if (gnorm <= options.gradient_tolerance) {
        stage.converged = true;
        break;
      }
      std::vector<double> dir;
      if (n > 1) {
        if (auto d = detail::newton_direction(chain, f, g, ev, eps, work)) dir = std::move(*d);
      }
      double slope = 0.0;
      for (std::size_t s = 0; s < n && !dir.empty(); ++s) slope += ev.gradient[s] * dir[s];
      if (dir.empty() || !(slope < 0.0)) {
        dir.assign(n, 0.0);
        for (std::size_t s = 1; s < n; ++s) dir[s] = -ev.gradient[s] * eps;
        slope = 0.0;
        for (std::size_t s = 0; s < n; ++s) slope += ev.gradient[s] * dir[s];
      }
      double step = 1.0;
      bool moved = false;
      std::vector<double> trial(n);
      while (step > 1e-14) {
        for (std::size_t s = 0; s < n; ++s) trial[s] = g[s] + step * dir[s];
        auto next = penalized_functional(chain, f, trial, eps);
        if (next.value <= ev.value + 1e-4 * step * slope) {
          g.swap(trial);
          ev = std::move(next);
          moved = true;
          break;
        }
        step *= 0.5;
      }
      stage.iterations = it + 1;
      // Newton decrement below rounding: nothing left to gain at this eps.
      if (!moved || -slope <= 1e-15 * std::max(1.0, std::abs(ev.value))) {
        stage.converged = -slope <= 1e-12 * std::max(1.0, std::abs(ev.value)) || gnorm <= 1e-9;
        break;
      }
    }
    double mean = 0.0;
    for (double v : g) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : g) v -= mean;
    ev = penalized_functional(chain, f, g, eps);
    stage.penalized_value = ev.value;
    stage.value = *std::max_element(ev.log_sums.begin(), ev.log_sums.end());
    stage.gradient_norm = detail::l1_norm(ev.gradient);
    if (options.reference) stage.gap = stage.value - *options.reference;
    result.converged = result.converged && stage.converged;
    result.stages.push_back(stage);
  }

  result.value = result.stages.back().value;
  result.penalized_value = result.stages.back().penalized_value;
  result.gap = result.stages.back().gap;
  result.G = gradient_from_potential(chain, g);
  result.g = std::move(g);
  return result;
}

}  // namespace percwalk
