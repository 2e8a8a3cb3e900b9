#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "percwalk/configuration.hpp"
#include "percwalk/error.hpp"
#include "percwalk/lattice.hpp"
#include "percwalk/rng.hpp"

namespace percwalk {

/// Product measure: each edge (bond) or site independently open with probability p.
inline Configuration sample_bernoulli(const Lattice& lattice, double p, std::uint64_t seed,
                                      PercolationKind kind) {
  detail::require(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
  Rng rng(seed);
  const std::size_t n =
      kind == PercolationKind::bond ? lattice.edge_count() : lattice.site_count();
  std::vector<std::uint8_t> bits(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == PercolationKind::bond && !lattice.edge_exists(i)) continue;
    if (kind == PercolationKind::site && !lattice.interior(static_cast<Site>(i))) continue;
    bits[i] = rng.uniform() < p ? 1 : 0;
  }
  ModelParams params;
  params.model = kind == PercolationKind::bond ? ModelTag::bernoulli_bond
                                               : ModelTag::bernoulli_site;
  params.p = p;
  params.seed = seed;
  return Configuration(lattice, kind, std::move(bits), params);
}

/// Heat-bath probability that an edge is open given the rest of the
/// configuration, for the FK weight p^n (1-p)^(|E|-n) q^(#clusters).
/// If the endpoints are joined without the edge, toggling it leaves the
/// cluster count unchanged; otherwise closing it adds one cluster.
inline double heat_bath_open_probability(double p, double q, bool endpoints_connected) noexcept {
  if (endpoints_connected) return p;
  return p / (p + q * (1.0 - p));
}

/// Single-edge heat-bath Glauber dynamics for the random-cluster model on a torus.
class RandomClusterChain {
 public:
  RandomClusterChain(Lattice lattice, double p, double q, std::uint64_t seed)
      : lattice_(std::move(lattice)),
        p_(p),
        q_(q),
        rng_(seed),
        bits_(lattice_.edge_count(), 1),
        mark_(lattice_.site_count(), 0) {
    detail::require(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
    detail::require(q >= 1.0, "random-cluster requires q >= 1");
    detail::require(lattice_.periodic(), "random-cluster dynamics run on a torus");
    queue_a_.reserve(lattice_.site_count());
    queue_b_.reserve(lattice_.site_count());
    const int dirs = lattice_.direction_count();
    step_edge_.resize(lattice_.site_count() * dirs);
    step_site_.resize(lattice_.site_count() * dirs);
    for (Site x = 0; x < lattice_.site_count(); ++x)
      for (int dir = 0; dir < dirs; ++dir) {
        step_edge_[x * dirs + dir] = lattice_.edge(x, static_cast<Direction>(dir));
        step_site_[x * dirs + dir] = lattice_.neighbor(x, static_cast<Direction>(dir));
      }
  }

  const Lattice& lattice() const noexcept { return lattice_; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  /// Probability that a heat-bath update of edge e leaves it open.
  double open_probability(EdgeIndex e) {
    if (q_ == 1.0) return p_;
    return heat_bath_open_probability(p_, q_, connected_without(e));
  }

  /// Resample edge e from its conditional law; returns the open probability used.
  double update(EdgeIndex e) {
    const double prob = open_probability(e);
    bits_[e] = rng_.uniform() < prob ? 1 : 0;
    return prob;
  }

  /// One systematic sweep over all edges in index order.
  void sweep() {
    for (EdgeIndex e = 0; e < bits_.size(); ++e) update(e);
  }

  Configuration configuration(const ModelParams& params) const {
    return Configuration(lattice_, PercolationKind::bond, bits_, params);
  }

  /// Whether the endpoints of e are joined by open edges other than e
  /// (bidirectional breadth-first search, expanding the smaller frontier).
  bool connected_without(EdgeIndex e) {
    const Site a = lattice_.edge_tail(e);
    const Site b = lattice_.edge_head(e);
    if (a == b) return true;
    if (++stamp_ >= 0x7FFFFFFF) {
      std::fill(mark_.begin(), mark_.end(), 0u);
      stamp_ = 1;
    }
    const std::uint32_t tag_a = 2 * stamp_;
    const std::uint32_t tag_b = tag_a + 1;
    queue_a_.clear();
    queue_b_.clear();
    queue_a_.push_back(a);
    queue_b_.push_back(b);
    mark_[a] = tag_a;
    mark_[b] = tag_b;
    std::size_t head_a = 0, head_b = 0;
    const int dirs = lattice_.direction_count();
    while (head_a < queue_a_.size() && head_b < queue_b_.size()) {
      const bool expand_a = (queue_a_.size() - head_a) <= (queue_b_.size() - head_b);
      auto& queue = expand_a ? queue_a_ : queue_b_;
      auto& head = expand_a ? head_a : head_b;
      const std::uint32_t own = expand_a ? tag_a : tag_b;
      const std::uint32_t other = expand_a ? tag_b : tag_a;
      const Site x = queue[head++];
      for (int dir = 0; dir < dirs; ++dir) {
        const EdgeIndex edge = step_edge_[x * dirs + dir];
        if (edge == e || !bits_[edge]) continue;
        const Site y = step_site_[x * dirs + dir];
        if (mark_[y] == other) return true;
        if (mark_[y] != own) {
          mark_[y] = own;
          queue.push_back(y);
        }
      }
    }
    return false;
  }

 private:
  Lattice lattice_;
  double p_;
  double q_;
  Rng rng_;
  std::vector<std::uint8_t> bits_;
  std::vector<std::uint32_t> mark_;
  std::uint32_t stamp_ = 0;
  std::vector<EdgeIndex> step_edge_;  ///< edge crossed by each (site, direction)
  std::vector<Site> step_site_;       ///< neighbor reached by each (site, direction)
  std::vector<Site> queue_a_;
  std::vector<Site> queue_b_;
};

/// Random-cluster configuration after `sweeps` Glauber sweeps from all-open.
inline Configuration sample_random_cluster(const Lattice& lattice, double p, double q,
                                           std::uint32_t sweeps, std::uint64_t seed) {
  detail::require(q >= 1.0, "random-cluster requires q >= 1 (FKG regime)");
  detail::require(sweeps >= 1, "sweeps must be >= 1");
  RandomClusterChain chain(lattice, p, q, seed);
  for (std::uint32_t s = 0; s < sweeps; ++s) chain.sweep();
  ModelParams params;
  params.model = ModelTag::random_cluster;
  params.p = p;
  params.q = q;
  params.sweeps = sweeps;
  params.seed = seed;
  return chain.configuration(params);
}

enum class GffMethod { automatic, exact, gibbs };

/// Discrete Gaussian free field on a Dirichlet box: zero on the faces, and on
/// the interior a centred Gaussian vector with precision I - P_killed, i.e.
/// covariance equal to the Green function of simple random walk killed on
/// leaving the interior.
class GffSampler {
 public:
  static constexpr std::size_t kExactLimit = 125000;

  explicit GffSampler(Lattice box, GffMethod method = GffMethod::automatic,
                      std::uint32_t gibbs_sweeps = 200)
      : box_(std::move(box)), gibbs_sweeps_(gibbs_sweeps), index_(box_.site_count(), -1) {
    detail::require(!box_.periodic(), "GFF is sampled on a Dirichlet box");
    detail::require(box_.dim() >= 3, "GFF level sets require d >= 3");
    for (Site x = 0; x < box_.site_count(); ++x) {
      if (box_.interior(x)) {
        index_[x] = static_cast<std::int64_t>(interior_.size());
        interior_.push_back(x);
      }
    }
    exact_ = method == GffMethod::exact ||
             (method == GffMethod::automatic && interior_.size() <= kExactLimit);
    if (exact_ && !interior_.empty()) factorize();
  }

  const Lattice& lattice() const noexcept { return box_; }
  const std::vector<Site>& interior_sites() const noexcept { return interior_; }
  bool exact() const noexcept { return exact_; }

  /// The sparse precision matrix I - P_killed over interior sites.
  Eigen::SparseMatrix<double> precision() const {
    const double w = 1.0 / box_.direction_count();
    std::vector<Eigen::Triplet<double>> triplets;
    const auto n = static_cast<Eigen::Index>(interior_.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      triplets.emplace_back(i, i, 1.0);
      for (int dir = 0; dir < box_.direction_count(); ++dir) {
        const Site y = box_.neighbor(interior_[i], static_cast<Direction>(dir));
        if (y != kNoSite && index_[y] >= 0) triplets.emplace_back(i, index_[y], -w);
      }
    }
    Eigen::SparseMatrix<double> q(n, n);
    q.setFromTriplets(triplets.begin(), triplets.end());
    return q;
  }

  /// One field sample over all box sites (faces hold 0).
  std::vector<double> sample_field(Rng& rng) const {
    std::vector<double> field(box_.site_count(), 0.0);
    if (interior_.empty()) return field;
    if (exact_) {
      Eigen::VectorXd z(static_cast<Eigen::Index>(interior_.size()));
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
      // P Q P^T = L L^T, so P^T L^{-T} z has covariance Q^{-1}.
      Eigen::VectorXd y = llt_.matrixU().solve(z);
      Eigen::VectorXd phi = llt_.permutationPinv() * y;
      for (std::size_t i = 0; i < interior_.size(); ++i) field[interior_[i]] = phi[i];
      return field;
    }
    const double w = 1.0 / box_.direction_count();
    for (std::uint32_t sweep = 0; sweep < gibbs_sweeps_; ++sweep) {
      for (Site x : interior_) {
        double mean = 0.0;
        for (int dir = 0; dir < box_.direction_count(); ++dir) {
          const Site y = box_.neighbor(x, static_cast<Direction>(dir));
          if (y != kNoSite) mean += w * field[y];
        }
        field[x] = mean + rng.normal();
      }
    }
    return field;
  }

 private:
  void factorize() {
    llt_.compute(precision());
    if (llt_.info() != Eigen::Success) throw Error("GFF precision matrix factorization failed");
  }

  Lattice box_;
  std::uint32_t gibbs_sweeps_;
  std::vector<std::int64_t> index_;
  std::vector<Site> interior_;
  bool exact_ = false;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
};

/// Site configuration {x interior : field(x) >= h}.
inline Configuration gff_level_set(const Lattice& box, const std::vector<double>& field, double h,
                                   const ModelParams& params) {
  detail::require(field.size() == box.site_count(), "field size does not match the box");
  std::vector<std::uint8_t> bits(box.site_count(), 0);
  for (Site x = 0; x < box.site_count(); ++x)
    bits[x] = (box.interior(x) && field[x] >= h) ? 1 : 0;
  return Configuration(box, PercolationKind::site, std::move(bits), params);
}

inline Configuration sample_gff_level_set(const Lattice& box, double h, std::uint64_t seed,
                                          std::uint32_t gibbs_sweeps = 200) {
  detail::require(box.dim() >= 3, "GFF level sets require d >= 3");
  detail::require(!box.periodic(), "GFF is sampled on a Dirichlet box");
  GffSampler sampler(box, GffMethod::automatic, gibbs_sweeps);
  Rng rng(seed);
  ModelParams params;
  params.model = ModelTag::gff_level_set;
  params.h = h;
  params.sweeps = gibbs_sweeps;
  params.seed = seed;
  return gff_level_set(box, sampler.sample_field(rng), h, params);
}

/// Number of walk steps floor(u * N^d) used for the torus interlacement.
inline std::uint64_t interlacement_steps(const Lattice& torus, double u) {
  const long double volume = static_cast<long double>(torus.site_count());
  return static_cast<std::uint64_t>(std::floor(static_cast<long double>(u) * volume));
}

struct InterlacementSample {
  Configuration config;
  std::uint64_t steps = 0;
};

/// Trace of one simple random walk on the torus run for floor(u N^d) steps from
/// a uniform start (sites X_0..X_T); with `vacant` the complement is returned.
/// A walk of zero steps is not run and leaves an empty trace.
inline InterlacementSample run_interlacement(const Lattice& torus, double u, std::uint64_t seed,
                                             bool vacant) {
  detail::require(torus.dim() >= 3, "interlacements require d >= 3");
  detail::require(torus.periodic(), "interlacements are sampled on a torus");
  detail::require(std::isfinite(u) && u > 0.0, "u must be > 0");
  const std::uint64_t steps = interlacement_steps(torus, u);
  std::vector<std::uint8_t> visited(torus.site_count(), 0);
  if (steps > 0) {
    Rng rng(seed);
    auto x = static_cast<Site>(rng.below(torus.site_count()));
    visited[x] = 1;
    const auto dirs = static_cast<std::uint64_t>(torus.direction_count());
    for (std::uint64_t t = 0; t < steps; ++t) {
      x = torus.neighbor(x, static_cast<Direction>(rng.below(dirs)));
      visited[x] = 1;
    }
  }
  if (vacant)
    for (auto& b : visited) b ^= 1;
  ModelParams params;
  params.model = vacant ? ModelTag::vacant_set : ModelTag::interlacement;
  params.u = u;
  params.seed = seed;
  return {Configuration(torus, PercolationKind::site, std::move(visited), params), steps};
}

inline Configuration sample_interlacement(const Lattice& torus, double u, std::uint64_t seed,
                                          bool vacant) {
  return run_interlacement(torus, u, seed, vacant).config;
}

/// Sample whichever model `params` names.
inline Configuration sample_model(const Lattice& lattice, const ModelParams& params) {
  params.validate(lattice);
  switch (params.model) {
    case ModelTag::bernoulli_bond:
      return sample_bernoulli(lattice, params.p, params.seed, PercolationKind::bond);
    case ModelTag::bernoulli_site:
      return sample_bernoulli(lattice, params.p, params.seed, PercolationKind::site);
    case ModelTag::random_cluster:
      return sample_random_cluster(lattice, params.p, params.q, params.sweeps, params.seed);
    case ModelTag::interlacement:
      return sample_interlacement(lattice, params.u, params.seed, false);
    case ModelTag::vacant_set:
      return sample_interlacement(lattice, params.u, params.seed, true);
    case ModelTag::gff_level_set:
      return sample_gff_level_set(lattice, params.h, params.seed, params.sweeps);
  }
  throw InvalidArgument("unknown model");
}

}  // namespace percwalk
