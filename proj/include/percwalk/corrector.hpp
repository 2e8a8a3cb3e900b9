#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "percwalk/chain.hpp"
#include "percwalk/clusters.hpp"

namespace percwalk {

struct CorrectorOptions {
  std::size_t shift_roots = 8;      ///< sampled roots y for the shift-covariance check
  std::uint64_t seed = 0;
  bool throw_if_not_gradient = true;
};

struct CorrectorDiagnostics {
  std::vector<double> V;              ///< path sums of G from state 0 along a BFS tree
  double max_abs_G = 0.0;
  double loop_residual = 0.0;         ///< max over directed open edges of |V(x) + G(x,e) - V(x+e)|
  std::size_t loops_checked = 0;
  double shift_covariance_residual = 0.0;
  std::vector<double> induced_mean;   ///< per direction, average of V(sigma_e x) - V(x)
  double induced_mean_max = 0.0;
  std::size_t no_return_sites = 0;    ///< sites whose line meets the giant cluster only once
};

namespace detail {

/// Path sums of G from `root` over a breadth-first spanning tree.
inline std::vector<double> path_sums(const EnvironmentChain& chain, const EdgeTable& G,
                                     std::size_t root) {
  std::vector<double> V(chain.size(), 0.0);
  std::vector<char> seen(chain.size(), 0);
  std::vector<std::size_t> queue{root};
  seen[root] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t x = queue[head];
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      if (!chain.open(x, dir)) continue;
      const std::size_t y = chain.next(x, dir);
      if (seen[y]) continue;
      seen[y] = 1;
      V[y] = V[x] + G(x, dir);
      queue.push_back(y);
    }
  }
  return V;
}

}  // namespace detail

/// Corrector V(x) = sum of G along a path from the root, with loop,
/// shift-covariance and induced-mean diagnostics.
///
/// Every directed open edge closes a fundamental loop of the spanning tree, so
/// the loop residual is checked on all of them. The induced mean sums over all
/// giant sites in compensated arithmetic; sites with no return along e count
/// with sigma_e(x) = x.
inline CorrectorDiagnostics corrector_eval(const EnvironmentChain& chain, const EdgeTable& G,
                                           const ClusterLabeling& labeling,
                                           const CorrectorOptions& options = {}) {
  detail::require(G.states == chain.size() && G.dirs == chain.dirs(),
                  "gradient field shape does not match the chain");
  CorrectorDiagnostics out;
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      if (chain.open(s, dir)) {
        detail::require(std::isfinite(G(s, dir)), "gradient field must be finite");
        out.max_abs_G = std::max(out.max_abs_G, std::abs(G(s, dir)));
      }
    }
  out.V = detail::path_sums(chain, G, 0);
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      if (!chain.open(s, dir)) continue;
      ++out.loops_checked;
      out.loop_residual = std::max(out.loop_residual,
                                   std::abs(out.V[s] + G(s, dir) - out.V[chain.next(s, dir)]));
    }
  if (out.loop_residual > 1e-6 && options.throw_if_not_gradient)
    throw NotAGradient("loop residual " + format_double(out.loop_residual) + " exceeds 1e-6");

  Rng rng(options.seed);
  const std::size_t roots = std::min(options.shift_roots, chain.size());
  for (std::size_t r = 0; r < roots; ++r) {
    const std::size_t y = rng.below(chain.size());
    const auto W = detail::path_sums(chain, G, y);
    for (std::size_t x = 0; x < chain.size(); ++x)
      out.shift_covariance_residual =
          std::max(out.shift_covariance_residual, std::abs(out.V[x] - out.V[y] - W[x]));
  }

  const ClusterGraph& graph = chain.graph();
  const Lattice& lattice = graph.lattice();
  for (int dir = 0; dir < chain.dirs(); ++dir) {
    CompensatedSum sum;
    for (std::size_t s = 0; s < chain.size(); ++s) {
      const auto hit = detail::first_return(lattice, labeling, graph.site(static_cast<State>(s)),
                                            static_cast<Direction>(dir));
      if (!hit) {
        ++out.no_return_sites;
        continue;
      }
      const auto target = static_cast<std::size_t>(graph.state_of(hit->second));
      sum.add(out.V[target]);
      sum.add(-out.V[s]);
    }
    const double mean = sum.value() / static_cast<double>(chain.size());
    out.induced_mean.push_back(mean);
    out.induced_mean_max = std::max(out.induced_mean_max, std::abs(mean));
  }
  return out;
}

/// max over giant sites within torus l1 distance n of the root of |V(x)| / n.
inline std::vector<double> sublinearity_profile(const EnvironmentChain& chain,
                                                const std::vector<double>& V,
                                                const std::vector<int>& radii,
                                                std::size_t root = 0) {
  detail::require(V.size() == chain.size(), "corrector size does not match the chain");
  const ClusterGraph& graph = chain.graph();
  const Lattice& lattice = graph.lattice();
  const Site origin = graph.site(static_cast<State>(root));
  std::vector<double> out;
  for (int n : radii) {
    detail::require(n >= 1, "radii must be >= 1");
    double best = 0.0;
    for (std::size_t s = 0; s < chain.size(); ++s)
      if (lattice.l1_distance(origin, graph.site(static_cast<State>(s))) <= n)
        best = std::max(best, std::abs(V[s] - V[root]));
    out.push_back(best / n);
  }
  return out;
}

/// Profile of the corrector built from G, rooted at state 0.
inline std::vector<double> sublinearity_profile(const EnvironmentChain& chain, const EdgeTable& G,
                                                const std::vector<int>& radii) {
  return sublinearity_profile(chain, detail::path_sums(chain, G, 0), radii, 0);
}

}  // namespace percwalk
