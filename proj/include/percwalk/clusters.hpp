#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "percwalk/configuration.hpp"
#include "percwalk/error.hpp"
#include "percwalk/lattice.hpp"
#include "percwalk/rng.hpp"

namespace percwalk {

inline constexpr std::int32_t kNoCluster = -1;

/// Disjoint-set forest with union by size and path halving.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::uint32_t{0});
  }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> size_;
};

/// Connected components of a configuration.
///
/// Component ids are numbered in order of each component's smallest site, so
/// the labeling is canonical. Bond models label every site (isolated sites are
/// singletons); site models label open sites only and give closed ones
/// kNoCluster. The giant cluster is the largest component, ties going to the
/// smaller id.
struct ClusterLabeling {
  std::vector<std::int32_t> component;
  std::vector<std::size_t> sizes;
  std::int32_t giant = kNoCluster;
  double density = 0.0;

  bool in_giant(Site x) const noexcept {
    return giant != kNoCluster && component[x] == giant;
  }
  std::size_t giant_size() const noexcept {
    return giant == kNoCluster ? 0 : sizes[static_cast<std::size_t>(giant)];
  }
  std::size_t component_count() const noexcept { return sizes.size(); }

  /// Giant-cluster sites in increasing order.
  std::vector<Site> giant_sites() const {
    std::vector<Site> out;
    out.reserve(giant_size());
    for (Site x = 0; x < component.size(); ++x)
      if (in_giant(x)) out.push_back(x);
    return out;
  }
};

inline ClusterLabeling label_clusters(const Configuration& config) {
  const Lattice& lattice = config.lattice();
  const std::size_t n = lattice.site_count();
  DisjointSets sets(n);
  const bool bond = config.kind() == PercolationKind::bond;
  for (Site x = 0; x < n; ++x) {
    for (int axis = 0; axis < lattice.dim(); ++axis) {
      const Direction dir = positive_direction(axis);
      if (config.step_open(x, dir)) sets.unite(x, lattice.neighbor(x, dir));
    }
  }
  ClusterLabeling labeling;
  labeling.component.assign(n, kNoCluster);
  std::vector<std::int32_t> id_of_root(n, kNoCluster);
  for (Site x = 0; x < n; ++x) {
    if (!bond && !config.site_open(x)) continue;
    const auto root = sets.find(x);
    if (id_of_root[root] == kNoCluster) {
      id_of_root[root] = static_cast<std::int32_t>(labeling.sizes.size());
      labeling.sizes.push_back(0);
    }
    labeling.component[x] = id_of_root[root];
    ++labeling.sizes[static_cast<std::size_t>(id_of_root[root])];
  }
  for (std::size_t id = 0; id < labeling.sizes.size(); ++id) {
    if (labeling.giant == kNoCluster ||
        labeling.sizes[id] > labeling.sizes[static_cast<std::size_t>(labeling.giant)])
      labeling.giant = static_cast<std::int32_t>(id);
  }
  labeling.density = static_cast<double>(labeling.giant_size()) / static_cast<double>(n);
  return labeling;
}

/// Reusable breadth-first search over open steps; visited marks are reset in
/// O(1) by bumping a stamp.
class BfsWorkspace {
 public:
  explicit BfsWorkspace(const Configuration& config)
      : config_(&config),
        stamp_of_(config.lattice().site_count(), 0),
        distance_(config.lattice().site_count(), 0) {}

  /// Distances from `source` to every reachable site (-1 elsewhere).
  std::vector<int> all_distances(Site source) {
    std::vector<int> out(stamp_of_.size(), -1);
    run(source, kNoSite, -1);
    for (Site x : queue_) out[x] = distance_[x];
    return out;
  }

  /// Shortest open-path length from source to target, or nullopt.
  /// A positive `max_distance` stops the search beyond that radius.
  std::optional<int> distance(Site source, Site target, int max_distance = -1) {
    return run(source, target, max_distance);
  }

 private:
  std::optional<int> run(Site source, Site target, int max_distance) {
    const Configuration& config = *config_;
    const Lattice& lattice = config.lattice();
    queue_.clear();
    if (!config.site_open(source)) return std::nullopt;
    if (++stamp_ == 0) {
      std::fill(stamp_of_.begin(), stamp_of_.end(), 0u);
      stamp_ = 1;
    }
    stamp_of_[source] = stamp_;
    distance_[source] = 0;
    queue_.push_back(source);
    if (source == target) return 0;
    for (std::size_t head = 0; head < queue_.size(); ++head) {
      const Site x = queue_[head];
      if (max_distance >= 0 && distance_[x] >= max_distance) continue;
      for (int dir = 0; dir < lattice.direction_count(); ++dir) {
        const auto direction = static_cast<Direction>(dir);
        if (!config.step_open(x, direction)) continue;
        const Site y = lattice.neighbor(x, direction);
        if (stamp_of_[y] == stamp_) continue;
        stamp_of_[y] = stamp_;
        distance_[y] = distance_[x] + 1;
        if (y == target) return distance_[y];
        queue_.push_back(y);
      }
    }
    return std::nullopt;
  }

  const Configuration* config_;
  std::vector<std::uint32_t> stamp_of_;
  std::vector<int> distance_;
  std::vector<Site> queue_;
  std::uint32_t stamp_ = 0;
};

/// Chemical (graph) distance between x and y within their cluster; nullopt
/// ("unreachable") when they lie in different clusters.
inline std::optional<int> chemical_distance(const Configuration& config,
                                            const ClusterLabeling& labeling, Site x, Site y) {
  const auto cx = labeling.component[x];
  if (cx == kNoCluster || cx != labeling.component[y]) return std::nullopt;
  BfsWorkspace bfs(config);
  return bfs.distance(x, y);
}

struct InducedShift {
  int k = 0;                 ///< first k >= 1 with x + k e in the giant cluster
  Site target = kNoSite;     ///< x + k e
  int chemical_length = 0;   ///< chemical distance from x to the target
};

namespace detail {
/// First k in [1, L-1] with x + k e in the giant cluster, with the site reached.
inline std::optional<std::pair<int, Site>> first_return(const Lattice& lattice,
                                                        const ClusterLabeling& labeling, Site x,
                                                        Direction dir) {
  Site y = x;
  for (int k = 1; k < lattice.side(); ++k) {
    y = lattice.neighbor(y, dir);
    if (y == kNoSite) return std::nullopt;
    if (labeling.in_giant(y)) return std::make_pair(k, y);
  }
  return std::nullopt;
}
}  // namespace detail

/// Induced shift along direction e from a giant-cluster site.
///
/// k ranges over [1, L-1]; k = L would bring the walk back to x itself, so a
/// line that meets the giant cluster only at x raises NoReturn.
inline InducedShift induced_shift(const Configuration& config, const ClusterLabeling& labeling,
                                  Site x, Direction dir, BfsWorkspace* workspace = nullptr) {
  detail::require(labeling.in_giant(x), "induced_shift requires a giant-cluster site");
  detail::require(dir < config.lattice().direction_count(), "direction out of range");
  const auto hit = detail::first_return(config.lattice(), labeling, x, dir);
  if (!hit) throw NoReturn("no return to the giant cluster along this axis");
  BfsWorkspace local(config);
  BfsWorkspace& bfs = workspace ? *workspace : local;
  const auto length = bfs.distance(x, hit->second);
  return {hit->first, hit->second, *length};
}

/// Empirical geometry of one or more configurations.
struct GeometryStats {
  struct TailCurve {
    int direction = -1;                ///< -1 for all directions pooled
    std::size_t observations = 0;
    std::vector<double> tail;          ///< tail[n] = P(ell > n)
    double slope = 0.0;                ///< least-squares slope of log tail vs n
    double slope_stderr = 0.0;
    double slope_ci_low = 0.0;
    double slope_ci_high = 0.0;
    int fit_first = 0;
    int fit_last = -1;                 ///< inclusive; fit_last < fit_first if no fit
  };

  std::vector<double> ratio_edges;     ///< histogram bin edges for d_ch / |x-y|_1
  std::vector<std::size_t> ratio_counts;
  double ratio_median = 0.0;
  double ratio_q90 = 0.0;
  double ratio_q99 = 0.0;              ///< reported constant rho-hat
  double ratio_max = 0.0;
  std::size_t pair_count = 0;
  std::vector<TailCurve> tails;        ///< one per direction, then the pooled curve
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Tail curve from ell counts, with an unweighted least-squares fit of
/// log P(ell > n) over n >= 1 while at least `floor_count` observations exceed n.
inline GeometryStats::TailCurve tail_curve(int direction, const std::vector<std::size_t>& counts,
                                           std::size_t floor_count) {
  GeometryStats::TailCurve curve;
  curve.direction = direction;
  std::size_t total = 0;
  for (auto c : counts) total += c;
  curve.observations = total;
  if (total == 0) return curve;
  std::vector<std::size_t> exceed(counts.size(), 0);
  std::size_t above = total;
  for (std::size_t n = 0; n < counts.size(); ++n) {
    above -= counts[n];
    exceed[n] = above;
    curve.tail.push_back(static_cast<double>(above) / static_cast<double>(total));
  }
  std::vector<double> xs, ys;
  for (std::size_t n = 1; n < exceed.size() && exceed[n] >= floor_count; ++n) {
    xs.push_back(static_cast<double>(n));
    ys.push_back(std::log(static_cast<double>(exceed[n]) / static_cast<double>(total)));
  }
  if (xs.size() < 2) return curve;
  curve.fit_first = static_cast<int>(xs.front());
  curve.fit_last = static_cast<int>(xs.back());
  const double m = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  curve.slope = sxy / sxx;
  if (xs.size() > 2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double r = ys[i] - (my + curve.slope * (xs[i] - mx));
      sse += r * r;
    }
    curve.slope_stderr = std::sqrt(sse / (m - 2.0) / sxx);
    const boost::math::students_t dist(m - 2.0);
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    curve.slope_ci_low = curve.slope - t * curve.slope_stderr;
    curve.slope_ci_high = curve.slope + t * curve.slope_stderr;
  } else {
    curve.slope_ci_low = curve.slope_ci_high = curve.slope;
  }
  return curve;
}

}  // namespace detail

struct LabeledConfiguration {
  const Configuration* config;
  const ClusterLabeling* labeling;
};

/// Chemical-distance ratios and induced-shift tails over a set of samples.
///
/// Ratio pairs are drawn uniformly among giant-cluster pairs with torus
/// l1 distance in [1, L/4]. Induced-shift lengths ell are recorded for every
/// giant site and direction; sites with no return are skipped.
inline GeometryStats geometry_tail_stats(std::span<const LabeledConfiguration> samples,
                                         std::size_t pair_budget, std::uint64_t seed,
                                         std::size_t fit_floor = 10) {
  detail::require(!samples.empty(), "geometry_tail_stats needs at least one sample");
  GeometryStats stats;
  Rng rng(seed);
  std::vector<double> ratios;
  const int dirs = samples.front().config->lattice().direction_count();
  std::vector<std::vector<std::size_t>> ell_counts(dirs);
  const std::size_t per_sample = (pair_budget + samples.size() - 1) / samples.size();

  for (const auto& sample : samples) {
    const Configuration& config = *sample.config;
    const ClusterLabeling& labeling = *sample.labeling;
    const Lattice& lattice = config.lattice();
    detail::require(lattice.direction_count() == dirs, "samples must share a dimension");
    const auto giant = labeling.giant_sites();
    if (giant.empty()) continue;
    BfsWorkspace bfs(config);

    const int radius = std::max(1, lattice.side() / 4);
    const std::size_t sources = std::min<std::size_t>(per_sample, 32);
    const std::size_t per_source = sources == 0 ? 0 : (per_sample + sources - 1) / sources;
    for (std::size_t s = 0; s < sources; ++s) {
      const Site x = giant[rng.below(giant.size())];
      const auto dist = bfs.all_distances(x);
      std::size_t taken = 0;
      for (std::size_t attempt = 0; taken < per_source && attempt < 200 * per_source;
           ++attempt) {
        std::vector<int> c = lattice.coordinates(x);
        for (int i = 0; i < lattice.dim(); ++i)
          c[i] += static_cast<int>(rng.below(2 * radius + 1)) - radius;
        const Site y = lattice.site(c);
        if (y == kNoSite || y == x || !labeling.in_giant(y)) continue;
        const int l1 = lattice.l1_distance(x, y);
        if (l1 > radius) continue;
        ratios.push_back(static_cast<double>(dist[y]) / l1);
        ++taken;
      }
    }

    for (Site x : giant) {
      for (int dir = 0; dir < dirs; ++dir) {
        const auto hit =
            detail::first_return(lattice, labeling, x, static_cast<Direction>(dir));
        if (!hit) continue;
        const auto ell = static_cast<std::size_t>(*bfs.distance(x, hit->second));
        auto& counts = ell_counts[dir];
        if (counts.size() <= ell) counts.resize(ell + 1, 0);
        ++counts[ell];
      }
    }
  }

  stats.pair_count = ratios.size();
  if (ratios.size() < 100) throw InsufficientData("fewer than 100 valid chemical-distance pairs");
  std::sort(ratios.begin(), ratios.end());
  stats.ratio_median = detail::quantile_sorted(ratios, 0.5);
  stats.ratio_q90 = detail::quantile_sorted(ratios, 0.9);
  stats.ratio_q99 = detail::quantile_sorted(ratios, 0.99);
  stats.ratio_max = ratios.back();
  const double width = 0.25;
  const auto bins = static_cast<std::size_t>(std::floor((stats.ratio_max - 1.0) / width)) + 1;
  for (std::size_t b = 0; b <= bins; ++b) stats.ratio_edges.push_back(1.0 + width * b);
  stats.ratio_counts.assign(bins, 0);
  for (double r : ratios) {
    auto b = static_cast<std::size_t>(std::floor((r - 1.0) / width));
    ++stats.ratio_counts[std::min(b, bins - 1)];
  }

  std::vector<std::size_t> pooled;
  for (int dir = 0; dir < dirs; ++dir) {
    const auto& counts = ell_counts[dir];
    if (pooled.size() < counts.size()) pooled.resize(counts.size(), 0);
    for (std::size_t n = 0; n < counts.size(); ++n) pooled[n] += counts[n];
    stats.tails.push_back(detail::tail_curve(dir, counts, fit_floor));
  }
  stats.tails.push_back(detail::tail_curve(-1, pooled, fit_floor));
  return stats;
}

/// Giant-cluster density in each cube of an axis-aligned tiling.
///
/// For each side fraction f the cube side is max(1, floor(f L)) and the torus is
/// tiled by floor(L / side)^d cubes anchored at the origin; a fraction of 1
/// yields the whole lattice.
inline std::vector<std::vector<double>> density_in_cubes(const Lattice& lattice,
                                                         const ClusterLabeling& labeling,
                                                         std::span<const double> fractions) {
  std::vector<std::vector<double>> out;
  const int dim = lattice.dim();
  for (double f : fractions) {
    detail::require(f > 0.0 && f <= 1.0, "cube side fraction must lie in (0, 1]");
    const int side = std::max(1, static_cast<int>(std::floor(f * lattice.side() + 1e-9)));
    const int per_axis = lattice.side() / side;
    std::size_t cubes = 1;
    for (int i = 0; i < dim; ++i) cubes *= static_cast<std::size_t>(per_axis);
    std::vector<std::size_t> hits(cubes, 0);
    std::vector<std::size_t> totals(cubes, 0);
    for (Site x = 0; x < lattice.site_count(); ++x) {
      std::size_t cube = 0;
      bool inside = true;
      for (int i = 0; i < dim; ++i) {
        const int cell = lattice.coordinate(x, i) / side;
        if (cell >= per_axis) {
          inside = false;
          break;
        }
        cube = cube * static_cast<std::size_t>(per_axis) + static_cast<std::size_t>(cell);
      }
      if (!inside) continue;
      ++totals[cube];
      if (labeling.in_giant(x)) ++hits[cube];
    }
    std::vector<double> densities(cubes);
    for (std::size_t c = 0; c < cubes; ++c)
      densities[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    out.push_back(std::move(densities));
  }
  return out;
}

}  // namespace percwalk
