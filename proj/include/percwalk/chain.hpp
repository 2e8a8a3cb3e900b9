#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "percwalk/clusters.hpp"
#include "percwalk/error.hpp"
#include "percwalk/numerics.hpp"
#include "percwalk/text.hpp"
#include "percwalk/walk.hpp"

namespace percwalk {

/// Site process of the walk on the giant cluster: reference kernel = simple
/// random walk, reference measure = uniform over states.
class EnvironmentChain {
 public:
  explicit EnvironmentChain(std::shared_ptr<const ClusterGraph> graph)
      : graph_(std::move(graph)), srw_(graph_, kernel_mode::Srw{}) {}
  EnvironmentChain(const Configuration& config, const ClusterLabeling& labeling)
      : EnvironmentChain(std::make_shared<const ClusterGraph>(config, labeling)) {}

  const ClusterGraph& graph() const noexcept { return *graph_; }
  std::shared_ptr<const ClusterGraph> graph_ptr() const noexcept { return graph_; }
  const TransitionKernel& srw() const noexcept { return srw_; }
  std::size_t size() const noexcept { return graph_->state_count(); }
  int dirs() const noexcept { return graph_->directions(); }
  int dim() const noexcept { return graph_->lattice().dim(); }
  double pi(std::size_t s, int dir) const noexcept { return srw_.table()(s, dir); }
  bool open(std::size_t s, int dir) const noexcept {
    return graph_->open(static_cast<State>(s), dir);
  }
  std::size_t next(std::size_t s, int dir) const noexcept {
    return static_cast<std::size_t>(graph_->next(static_cast<State>(s), dir));
  }

  EdgeTable table(double fill = 0.0) const { return EdgeTable(size(), dirs(), fill); }

 private:
  std::shared_ptr<const ClusterGraph> graph_;
  TransitionKernel srw_;
};

/// f(x, e) = c on open directions.
inline EdgeTable constant_function(const EnvironmentChain& chain, double c) {
  EdgeTable f = chain.table();
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir)) f(s, dir) = c;
  return f;
}

/// f(x, e) = theta . e on open directions.
inline EdgeTable linear_function(const EnvironmentChain& chain, const std::vector<double>& theta) {
  detail::require(static_cast<int>(theta.size()) == chain.dim(), "theta must have d entries");
  EdgeTable f = chain.table();
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir))
        f(s, dir) = sign_of(static_cast<Direction>(dir)) * theta[axis_of(static_cast<Direction>(dir))];
  return f;
}

/// A value in [0, inf] with a symbolic infinity.
struct ExtendedReal {
  double value = 0.0;
  bool infinite = false;

  static ExtendedReal finite(double v) { return {v, false}; }
  static ExtendedReal infinity() { return {0.0, true}; }
  bool is_finite() const noexcept { return !infinite; }

  friend bool operator<=(const ExtendedReal& a, const ExtendedReal& b) {
    if (b.infinite) return true;
    if (a.infinite) return false;
    return a.value <= b.value;
  }
  friend bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return a.infinite == b.infinite && (a.infinite || a.value == b.value);
  }
  std::string str() const;
};

inline std::string ExtendedReal::str() const {
  return infinite ? "inf" : format_double(value);
}

struct DenseMarginals {
  std::vector<double> first;
  std::vector<double> second;
  double gap = 0.0;  ///< l1 distance
};

inline DenseMarginals dense_marginals(const EdgeTable& mu, const EnvironmentChain& chain) {
  DenseMarginals m;
  m.first.assign(chain.size(), 0.0);
  m.second.assign(chain.size(), 0.0);
  for (std::size_t s = 0; s < chain.size(); ++s) {
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      const double w = mu(s, dir);
      if (w == 0.0) continue;
      m.first[s] += w;
      if (chain.open(s, dir)) m.second[chain.next(s, dir)] += w;
    }
  }
  for (std::size_t s = 0; s < chain.size(); ++s) m.gap += std::abs(m.first[s] - m.second[s]);
  return m;
}

/// Dense form of a sparse pair measure; nullopt when an atom lies off the giant cluster.
inline std::optional<EdgeTable> dense_measure(const PairEmpiricalMeasure& mu,
                                              const EnvironmentChain& chain) {
  EdgeTable out = chain.table();
  for (const auto& atom : mu.atoms) {
    if (!chain.graph().contains(atom.site) || atom.direction >= chain.dirs()) return std::nullopt;
    out(static_cast<std::size_t>(chain.graph().state_of(atom.site)), atom.direction) += atom.weight;
  }
  return out;
}

inline constexpr double kStarSetTolerance = 1e-8;

/// Relative entropy of mu's conditional kernel against the walk kernel,
/// averaged under its first marginal. Infinite when the marginals differ by more
/// than 1e-8 in l1, when mu charges a closed direction, or when its kernel
/// vanishes on an open direction at a charged state.
inline ExtendedReal entropy_level2(const EdgeTable& mu, const EnvironmentChain& chain) {
  detail::require(mu.states == chain.size() && mu.dirs == chain.dirs(),
                  "measure shape does not match the chain");
  double total = 0.0;
  for (double w : mu.values) {
    detail::require(std::isfinite(w) && w >= 0.0, "measure weights must be finite and >= 0");
    total += w;
  }
  detail::require(std::abs(total - 1.0) <= 1e-9, "measure must be normalized");
  const auto m = dense_marginals(mu, chain);
  if (m.gap > kStarSetTolerance) return ExtendedReal::infinity();
  CompensatedSum sum;
  for (std::size_t s = 0; s < chain.size(); ++s) {
    if (m.first[s] == 0.0) continue;
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      const double w = mu(s, dir);
      if (!chain.open(s, dir)) {
        if (w > 0.0) return ExtendedReal::infinity();
        continue;
      }
      if (w == 0.0) return ExtendedReal::infinity();
      sum.add(w * std::log(w / (m.first[s] * chain.pi(s, dir))));
    }
  }
  return ExtendedReal::finite(std::max(0.0, sum.value()));
}

inline ExtendedReal entropy_level2(const PairEmpiricalMeasure& mu, const EnvironmentChain& chain) {
  const auto dense = dense_measure(mu, chain);
  if (!dense) return ExtendedReal::infinity();
  return entropy_level2(*dense, chain);
}

/// A kernel on the chain together with a density (mean 1 under the uniform
/// reference measure).
struct MeasureKernelPair {
  EdgeTable kernel;
  std::vector<double> phi;
};

/// r(x) = phi(x) - sum_{x' -> x} kernel(x', e) phi(x').
inline std::vector<double> invariance_residual(const MeasureKernelPair& pair,
                                               const EnvironmentChain& chain) {
  std::vector<double> r = pair.phi;
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      if (chain.open(s, dir)) r[chain.next(s, dir)] -= pair.kernel(s, dir) * pair.phi[s];
  return r;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline constexpr double kInvarianceTolerance = 1e-8;

inline bool is_invariant(const MeasureKernelPair& pair, const EnvironmentChain& chain) {
  return max_abs(invariance_residual(pair, chain)) <= kInvarianceTolerance;
}

/// mu -> (kernel, density) = (dmu / d(mu)_1, d(mu)_1 / dP). States the measure
/// does not charge keep the walk kernel.
inline MeasureKernelPair pair_from_measure(const EdgeTable& mu, const EnvironmentChain& chain) {
  const auto m = dense_marginals(mu, chain);
  if (m.gap > kStarSetTolerance)
    throw NotInStarSet("marginals differ by " + format_double(m.gap) + " in l1");
  MeasureKernelPair pair{chain.table(), std::vector<double>(chain.size())};
  const double n = static_cast<double>(chain.size());
  for (std::size_t s = 0; s < chain.size(); ++s) {
    pair.phi[s] = n * m.first[s];
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      if (!chain.open(s, dir)) {
        if (mu(s, dir) > 0.0) throw NotInStarSet("measure charges a closed direction");
        continue;
      }
      if (m.first[s] == 0.0) {
        pair.kernel(s, dir) = chain.pi(s, dir);
      } else {
        if (mu(s, dir) == 0.0) throw NotInStarSet("kernel vanishes on an open direction");
        pair.kernel(s, dir) = mu(s, dir) / m.first[s];
      }
    }
  }
  return pair;
}

/// (kernel, density) -> mu(x, e) = phi(x) kernel(x, e) / N.
inline EdgeTable measure_from_pair(const MeasureKernelPair& pair, const EnvironmentChain& chain) {
  detail::require(pair.kernel.states == chain.size() && pair.phi.size() == chain.size(),
                  "pair shape does not match the chain");
  const double residual = max_abs(invariance_residual(pair, chain));
  if (residual > kInvarianceTolerance)
    throw NotInvariant("invariance residual " + format_double(residual));
  EdgeTable mu = chain.table();
  const double n = static_cast<double>(chain.size());
  for (std::size_t s = 0; s < chain.size(); ++s)
    for (int dir = 0; dir < chain.dirs(); ++dir)
      mu(s, dir) = pair.phi[s] * pair.kernel(s, dir) / n;
  return mu;
}

namespace detail {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// K = I - P restricted to states 1..N-1, with P(x, y) = sum_e kernel(x, e) [next = y].
inline SparseMatrix killed_generator(const EdgeTable& kernel, const EnvironmentChain& chain) {
  const auto n = static_cast<Eigen::Index>(chain.size());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(n) * (chain.dirs() + 1));
  for (Eigen::Index x = 1; x < n; ++x) {
    t.emplace_back(x - 1, x - 1, 1.0);
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      if (!chain.open(static_cast<std::size_t>(x), dir)) continue;
      const auto y = static_cast<Eigen::Index>(chain.next(static_cast<std::size_t>(x), dir));
      if (y != 0) t.emplace_back(x - 1, y - 1, -kernel(static_cast<std::size_t>(x), dir));
    }
  }
  SparseMatrix k(n - 1, n - 1);
  k.setFromTriplets(t.begin(), t.end());
  k.makeCompressed();
  return k;
}

}  // namespace detail

/// Invariant density of an irreducible kernel, normalized to mean 1.
inline std::vector<double> stationary_density(const EdgeTable& kernel,
                                              const EnvironmentChain& chain) {
  const std::size_t n = chain.size();
  if (n == 1) return {1.0};
  // With phi(0) = 1: phi(y) - sum_{x >= 1} phi(x) P(x, y) = P(0, y) for y >= 1.
  const auto k = detail::killed_generator(kernel, chain);
  Eigen::SparseLU<detail::SparseMatrix> lu;
  lu.compute(k.transpose());
  if (lu.info() != Eigen::Success) throw Error("stationary density: factorization failed");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n - 1));
  for (int dir = 0; dir < chain.dirs(); ++dir)
    if (chain.open(0, dir) && chain.next(0, dir) != 0)
      rhs[static_cast<Eigen::Index>(chain.next(0, dir) - 1)] += kernel(0, dir);
  const Eigen::VectorXd z = lu.solve(rhs);
  std::vector<double> phi(n);
  phi[0] = 1.0;
  for (std::size_t s = 1; s < n; ++s) phi[s] = std::max(0.0, z[static_cast<Eigen::Index>(s - 1)]);
  double total = 0.0;
  for (double v : phi) total += v;
  for (double& v : phi) v *= static_cast<double>(n) / total;
  return phi;
}

/// Walk kernel with its stationary density (proportional to degree).
inline MeasureKernelPair srw_pair(const EnvironmentChain& chain) {
  MeasureKernelPair pair{chain.srw().table(), std::vector<double>(chain.size())};
  double total = 0.0;
  for (std::size_t s = 0; s < chain.size(); ++s)
    total += chain.graph().degree(static_cast<State>(s));
  for (std::size_t s = 0; s < chain.size(); ++s)
    pair.phi[s] = chain.graph().degree(static_cast<State>(s)) * static_cast<double>(chain.size()) / total;
  return pair;
}

/// <f, mu>.
inline double pairing(const EdgeTable& f, const EdgeTable& mu) {
  CompensatedSum sum;
  for (std::size_t i = 0; i < f.values.size(); ++i)
    if (mu.values[i] != 0.0) sum.add(f.values[i] * mu.values[i]);
  return sum.value();
}

}  // namespace percwalk
