#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "percwalk/chain.hpp"
#include "percwalk/numerics.hpp"
#include "percwalk/perron.hpp"

namespace percwalk {

enum class EstimatorKind { naive, tilted };

inline std::string estimator_name(EstimatorKind k) { return k == EstimatorKind::naive ? "naive" : "tilted"; }

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
  EstimatorKind kind = EstimatorKind::naive;
  double weight_sum = 0.0;          ///< sum of the self-normalized importance weights (= samples)
  double effective_samples = 0.0;   ///< (sum w)^2 / sum w^2 of the per-walk terms exp(y_i)
};

namespace detail {

/// Run fn(i) for i in [0, count) on up to `threads` workers; each index is
/// handled exactly once, so results stored per index do not depend on scheduling.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

/// (1/n) log mean exp(y) with a delta-method standard error.
inline McEstimate log_mean_exp_estimate(const std::vector<double>& y, std::size_t n) {
  McEstimate e;
  e.samples = y.size();
  const double m = *std::max_element(y.begin(), y.end());
  std::vector<double> z(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) z[i] = std::exp(y[i] - m);
  const auto mo = moments(z);
  e.estimate = (m + std::log(mo.mean)) / static_cast<double>(n);
  e.std_error = mo.stderr_of_mean() / mo.mean / static_cast<double>(n);
  const double total = pairwise_sum(z);
  std::vector<double> w(z.size()), w2(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    w[i] = static_cast<double>(z.size()) * z[i] / total;
    w2[i] = z[i] * z[i];
  }
  e.weight_sum = pairwise_sum(w);
  e.effective_samples = total * total / pairwise_sum(w2);
  return e;
}

}  // namespace detail

struct McOptions {
  unsigned threads = 1;
  PerronOptions perron;
};

/// Estimate of (1/n) log E[exp(theta . X_n)] over walks from uniform giant sites.
///
/// The naive estimator runs the walk kernel. The tilted estimator runs the
/// Perron h-transform K(x, e) = pi(x, e) exp(theta . e) v(x + e) / (rho v(x)),
/// under which exp(theta . X_n) dP/dK = rho^n v(X_0) / v(X_n). Both average in
/// log space. The tilted error adds the half-width of the Perron bracket in
/// quadrature. Walk i uses the stream Rng(seed).split(i).
inline McEstimate mc_log_mgf(const EnvironmentChain& chain, const std::vector<double>& theta,
                             std::size_t n, std::size_t walks, std::uint64_t seed, bool tilted,
                             const McOptions& options = {}) {
  detail::require(walks >= 100, "mc_log_mgf needs at least 100 walks");
  detail::require(n >= 1, "mc_log_mgf needs n >= 1");
  detail::require(static_cast<int>(theta.size()) == chain.dim(), "theta must have d entries");
  const EstimatorKind kind = tilted ? EstimatorKind::tilted : EstimatorKind::naive;
  const bool zero = std::all_of(theta.begin(), theta.end(), [](double t) { return t == 0.0; });
  if (zero) {
    McEstimate e;
    e.samples = walks;
    e.kind = kind;
    e.weight_sum = static_cast<double>(walks);
    e.effective_samples = static_cast<double>(walks);
    return e;
  }
  const ClusterGraph& graph = chain.graph();
  const std::size_t states = chain.size();
  const int dirs = chain.dirs();
  std::vector<double> y(walks);
  const Rng master(seed);

  if (!tilted) {
    const TransitionKernel& k = chain.srw();
    detail::parallel_for(walks, options.threads, [&](std::size_t i) {
      Rng rng = master.split(i);
      auto s = static_cast<State>(rng.below(states));
      double sum = 0.0;
      for (std::size_t step = 0; step < n; ++step) {
        const int dir = k.sample_direction(s, rng);
        sum += sign_of(static_cast<Direction>(dir)) * theta[axis_of(static_cast<Direction>(dir))];
        s = graph.next(s, dir);
      }
      y[i] = sum;
    });
    McEstimate e = detail::log_mean_exp_estimate(y, n);
    e.kind = kind;
    return e;
  }

  const auto perron = log_mgf_perron(chain, theta, options.perron);
  const auto& v = perron.vector;
  EdgeTable table = chain.table();
  for (std::size_t s = 0; s < states; ++s)
    for (int dir = 0; dir < dirs; ++dir)
      if (chain.open(s, dir))
        table(s, dir) = chain.pi(s, dir) *
                        std::exp(sign_of(static_cast<Direction>(dir)) *
                                 theta[axis_of(static_cast<Direction>(dir))]) *
                        v[chain.next(s, dir)];
  const TransitionKernel h_transform(chain.graph_ptr(), kernel_mode::Custom{std::move(table)});
  detail::parallel_for(walks, options.threads, [&](std::size_t i) {
    Rng rng = master.split(i);
    auto s = static_cast<State>(rng.below(states));
    const auto start = static_cast<std::size_t>(s);
    for (std::size_t step = 0; step < n; ++step) s = graph.next(s, h_transform.sample_direction(s, rng));
    const double log_ratio = std::log(v[start]) - std::log(v[static_cast<std::size_t>(s)]);
    y[i] = static_cast<double>(n) * perron.log_root + log_ratio;
  });
  McEstimate e = detail::log_mean_exp_estimate(y, n);
  e.kind = kind;
  // The Collatz-Wielandt bracket bounds the error of log rho used in every y.
  const double root_error = 0.5 * (std::log(perron.upper) - std::log(perron.lower));
  e.std_error = std::hypot(e.std_error, root_error);
  return e;
}

/// Exact (1/n) log E[exp(theta . X_n)] for a uniform start: (1/n) log mean(A^n 1)
/// by n sparse products, rescaled each step to stay in range.
inline double exact_log_mgf(const EnvironmentChain& chain, const std::vector<double>& theta, std::size_t n) {
  detail::require(n >= 1, "exact_log_mgf needs n >= 1");
  const TiltedMatrix a(chain, linear_function(chain, theta));
  std::vector<double> v(chain.size(), 1.0), av;
  double log_scale = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    a.apply(v, av);
    const double m = *std::max_element(av.begin(), av.end());
    for (std::size_t s = 0; s < av.size(); ++s) v[s] = av[s] / m;
    log_scale += std::log(m);
  }
  return (log_scale + std::log(pairwise_sum(v) / static_cast<double>(v.size()))) / static_cast<double>(n);
}

struct SpeedResult {
  double beta = 1.0;
  double mean = 0.0;     ///< mean of X_n . e_1 / n over walks
  double std_error = 0.0;
  double ci_low = 0.0;   ///< 95% Student-t interval
  double ci_high = 0.0;
  std::size_t walks = 0;
};

/// Directed speed per drift strength beta, each walk from a uniform giant site.
inline std::vector<SpeedResult> speed_experiment(std::shared_ptr<const ClusterGraph> graph,
                                                 const std::vector<double>& betas, std::size_t n,
                                                 std::size_t walks, std::uint64_t seed,
                                                 unsigned threads = 1) {
  detail::require(walks >= 100, "speed_experiment needs at least 100 walks");
  detail::require(n >= 1, "speed_experiment needs n >= 1");
  std::vector<SpeedResult> out;
  const Rng master(seed);
  for (std::size_t b = 0; b < betas.size(); ++b) {
    const TransitionKernel kernel(graph, kernel_mode::Drift{betas[b]});
    const Rng beta_stream = master.split(b);
    std::vector<double> speeds(walks);
    detail::parallel_for(walks, threads, [&](std::size_t i) {
      Rng rng = beta_stream.split(i);
      auto s = static_cast<State>(rng.below(graph->state_count()));
      std::int64_t x1 = 0;
      for (std::size_t step = 0; step < n; ++step) {
        const int dir = kernel.sample_direction(s, rng);
        if (dir == 0) ++x1;
        else if (dir == 1) --x1;
        s = graph->next(s, dir);
      }
      speeds[i] = static_cast<double>(x1) / static_cast<double>(n);
    });
    const auto m = moments(speeds);
    SpeedResult r;
    r.beta = betas[b];
    r.mean = m.mean;
    r.std_error = m.stderr_of_mean();
    r.walks = walks;
    const boost::math::students_t dist(static_cast<double>(walks - 1));
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    r.ci_low = r.mean - t * r.std_error;
    r.ci_high = r.mean + t * r.std_error;
    out.push_back(r);
  }
  return out;
}

struct ErgodicCheck {
  double time_average = 0.0;
  double space_average = 0.0;
  double gap = 0.0;
};

/// One walk of n steps under the pair's kernel from a phi-distributed start,
/// compared with the exact average of f under phi dP x kernel.
inline ErgodicCheck ergodic_average_check(const EnvironmentChain& chain, const MeasureKernelPair& pair,
                                          const EdgeTable& f, std::size_t n, std::uint64_t seed) {
  detail::require(n >= 1, "ergodic check needs n >= 1");
  const double residual = max_abs(invariance_residual(pair, chain));
  if (residual > kInvarianceTolerance)
    throw NotInvariant("invariance residual " + format_double(residual) + " exceeds 1e-8");
  const TransitionKernel kernel(chain.graph_ptr(), kernel_mode::Custom{pair.kernel});
  ErgodicCheck out;
  CompensatedSum space;
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir)) space.add(pair.phi[s] * pair.kernel(s, dir) * f(s, dir));
  out.space_average = space.value() / static_cast<double>(chain.size());

  Rng rng(seed);
  double u = rng.uniform() * static_cast<double>(chain.size());
  std::size_t s = 0;
  for (; s + 1 < chain.size(); ++s) {
    if (u < pair.phi[s]) break;
    u -= pair.phi[s];
  }
  auto state = static_cast<State>(s);
  CompensatedSum time;
  for (std::size_t k = 0; k < n; ++k) {
    const int dir = kernel.sample_direction(state, rng);
    time.add(f(static_cast<std::size_t>(state), dir));
    state = chain.graph().next(state, dir);
  }
  out.time_average = time.value() / static_cast<double>(n);
  out.gap = std::abs(out.time_average - out.space_average);
  return out;
}

}  // namespace percwalk
