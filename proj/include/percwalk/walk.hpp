#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "percwalk/clusters.hpp"
#include "percwalk/configuration.hpp"
#include "percwalk/error.hpp"
#include "percwalk/lattice.hpp"
#include "percwalk/rng.hpp"
#include "percwalk/text.hpp"

namespace percwalk {

using State = std::int32_t;
inline constexpr State kNoState = -1;

/// The giant cluster as a graph: states are giant sites in increasing order and
/// next(s, dir) is the state reached by an open step (kNoState when closed).
class ClusterGraph {
 public:
  ClusterGraph(const Configuration& config, const ClusterLabeling& labeling)
      : lattice_(config.lattice()),
        dirs_(lattice_.direction_count()),
        sites_(labeling.giant_sites()),
        state_of_(lattice_.site_count(), kNoState) {
    detail::require(!sites_.empty(), "the giant cluster is empty");
    for (std::size_t s = 0; s < sites_.size(); ++s)
      state_of_[sites_[s]] = static_cast<State>(s);
    next_.assign(sites_.size() * static_cast<std::size_t>(dirs_), kNoState);
    degree_.assign(sites_.size(), 0);
    for (std::size_t s = 0; s < sites_.size(); ++s) {
      for (int dir = 0; dir < dirs_; ++dir) {
        const auto direction = static_cast<Direction>(dir);
        if (!config.step_open(sites_[s], direction)) continue;
        next_[s * dirs_ + dir] = state_of_[lattice_.neighbor(sites_[s], direction)];
        ++degree_[s];
      }
    }
  }

  const Lattice& lattice() const noexcept { return lattice_; }
  int directions() const noexcept { return dirs_; }
  std::size_t state_count() const noexcept { return sites_.size(); }
  Site site(State s) const noexcept { return sites_[static_cast<std::size_t>(s)]; }
  const std::vector<Site>& sites() const noexcept { return sites_; }
  State state_of(Site x) const noexcept { return state_of_[x]; }
  bool contains(Site x) const noexcept { return x < state_of_.size() && state_of_[x] != kNoState; }
  State next(State s, int dir) const noexcept {
    return next_[static_cast<std::size_t>(s) * dirs_ + dir];
  }
  bool open(State s, int dir) const noexcept { return next(s, dir) != kNoState; }
  int degree(State s) const noexcept { return degree_[static_cast<std::size_t>(s)]; }

 private:
  Lattice lattice_;
  int dirs_;
  std::vector<Site> sites_;
  std::vector<State> state_of_;
  std::vector<State> next_;
  std::vector<int> degree_;
};

/// Values indexed by (state, direction), stored row-major.
struct EdgeTable {
  std::size_t states = 0;
  int dirs = 0;
  std::vector<double> values;

  EdgeTable() = default;
  EdgeTable(std::size_t n, int d, double fill = 0.0)
      : states(n), dirs(d), values(n * static_cast<std::size_t>(d), fill) {}

  double& operator()(std::size_t s, int dir) { return values[s * dirs + dir]; }
  double operator()(std::size_t s, int dir) const { return values[s * dirs + dir]; }
};

namespace kernel_mode {
struct Srw {};
struct Drift {
  double beta;
};
struct Tilted {
  std::vector<double> theta;
};
struct Custom {
  EdgeTable table;
};
}  // namespace kernel_mode

using KernelMode =
    std::variant<kernel_mode::Srw, kernel_mode::Drift, kernel_mode::Tilted, kernel_mode::Custom>;

/// Per-state step distribution over the 2d directions, supported exactly on
/// the open ones.
class TransitionKernel {
 public:
  TransitionKernel(std::shared_ptr<const ClusterGraph> graph, const KernelMode& mode)
      : graph_(std::move(graph)), prob_(graph_->state_count(), graph_->directions()) {
    const ClusterGraph& g = *graph_;
    const int dirs = g.directions();
    if (const auto* custom = std::get_if<kernel_mode::Custom>(&mode)) {
      const EdgeTable& t = custom->table;
      detail::require(t.states == g.state_count() && t.dirs == dirs,
                      "custom table shape does not match the cluster");
      for (std::size_t s = 0; s < g.state_count(); ++s) {
        for (int dir = 0; dir < dirs; ++dir) {
          const double v = t(s, dir);
          detail::require(std::isfinite(v) && v >= 0.0, "custom table entries must be >= 0");
          if (g.open(static_cast<State>(s), dir) != (v > 0.0))
            throw SupportViolation("custom table at site " +
                                   std::to_string(g.site(static_cast<State>(s))) +
                                   " direction " + std::to_string(dir) +
                                   (v > 0.0 ? " puts mass on a closed direction"
                                            : " puts no mass on an open direction"));
          prob_(s, dir) = v;
        }
      }
    } else {
      std::vector<double> weight(dirs, 1.0);
      if (const auto* drift = std::get_if<kernel_mode::Drift>(&mode)) {
        detail::require(std::isfinite(drift->beta) && drift->beta > 0.0, "drift requires beta > 0");
        weight[positive_direction(0)] = drift->beta;
      } else if (const auto* tilt = std::get_if<kernel_mode::Tilted>(&mode)) {
        detail::require(static_cast<int>(tilt->theta.size()) == g.lattice().dim(),
                        "theta must have one entry per axis");
        for (int dir = 0; dir < dirs; ++dir)
          weight[dir] = std::exp(sign_of(static_cast<Direction>(dir)) *
                                 tilt->theta[axis_of(static_cast<Direction>(dir))]);
      }
      for (std::size_t s = 0; s < g.state_count(); ++s)
        for (int dir = 0; dir < dirs; ++dir)
          prob_(s, dir) = g.open(static_cast<State>(s), dir) ? weight[dir] : 0.0;
    }
    cumulative_.assign(prob_.values.size(), 0.0);
    for (std::size_t s = 0; s < g.state_count(); ++s) {
      double total = 0.0;
      for (int dir = 0; dir < dirs; ++dir) total += prob_(s, dir);
      detail::require(total > 0.0, "kernel row without an open direction");
      double running = 0.0;
      for (int dir = 0; dir < dirs; ++dir) {
        prob_(s, dir) /= total;
        running += prob_(s, dir);
        cumulative_[s * dirs + dir] = running;
      }
      // The last open direction absorbs rounding so sampling never falls off the row.
      for (int dir = dirs - 1; dir >= 0; --dir) {
        if (prob_(s, dir) > 0.0) {
          cumulative_[s * dirs + dir] = 2.0;
          break;
        }
      }
    }
  }

  TransitionKernel(const Configuration& config, const ClusterLabeling& labeling,
                   const KernelMode& mode)
      : TransitionKernel(std::make_shared<const ClusterGraph>(config, labeling), mode) {}

  const ClusterGraph& graph() const noexcept { return *graph_; }
  std::shared_ptr<const ClusterGraph> graph_ptr() const noexcept { return graph_; }
  const EdgeTable& table() const noexcept { return prob_; }
  double operator()(State s, int dir) const noexcept { return prob_(static_cast<std::size_t>(s), dir); }

  /// Probability of stepping from giant site x in direction dir.
  double probability(Site x, Direction dir) const {
    const State s = graph_->state_of(x);
    detail::require(s != kNoState, "site is not in the giant cluster");
    return prob_(static_cast<std::size_t>(s), dir);
  }

  int sample_direction(State s, Rng& rng) const {
    const double u = rng.uniform();
    const double* row = &cumulative_[static_cast<std::size_t>(s) * graph_->directions()];
    int dir = 0;
    while (u >= row[dir]) ++dir;
    return dir;
  }

 private:
  std::shared_ptr<const ClusterGraph> graph_;
  EdgeTable prob_;
  std::vector<double> cumulative_;
};

inline TransitionKernel build_kernel(const Configuration& config, const ClusterLabeling& labeling,
                                     const KernelMode& mode) {
  return TransitionKernel(config, labeling, mode);
}

/// A walk: start site plus one direction byte per step.
struct WalkPath {
  Site start = kNoSite;
  std::vector<Direction> steps;

  std::size_t length() const noexcept { return steps.size(); }

  /// X_0, ..., X_n on the lattice.
  std::vector<Site> sites(const Lattice& lattice) const {
    std::vector<Site> out;
    out.reserve(steps.size() + 1);
    out.push_back(start);
    for (Direction dir : steps) out.push_back(lattice.neighbor(out.back(), dir));
    return out;
  }

  /// Unwrapped displacement X_n - X_0.
  std::vector<std::int64_t> displacement(int dim) const {
    std::vector<std::int64_t> out(dim, 0);
    for (Direction dir : steps) out[axis_of(dir)] += sign_of(dir);
    return out;
  }

  friend bool operator==(const WalkPath&, const WalkPath&) = default;
};

inline WalkPath simulate_walk(const TransitionKernel& kernel, Site start, std::size_t n,
                              std::uint64_t seed) {
  const ClusterGraph& g = kernel.graph();
  State s = g.contains(start) ? g.state_of(start) : kNoState;
  detail::require(s != kNoState, "walks must start in the giant cluster");
  Rng rng(seed);
  WalkPath path;
  path.start = start;
  path.steps.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int dir = kernel.sample_direction(s, rng);
    path.steps[k] = static_cast<Direction>(dir);
    s = g.next(s, dir);
  }
  return path;
}

namespace detail {
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_uint(const std::string& in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}
}  // namespace detail

/// Path byte stream: "PWWP", u16 version, u8 d, u8 reserved, u32 L,
/// u32 start site, u64 step count, then one direction byte per step.
inline std::string encode_path(const WalkPath& path, const Lattice& lattice) {
  std::string out = "PWWP";
  out.push_back(1);
  out.push_back(0);
  out.push_back(static_cast<char>(lattice.dim()));
  out.push_back(0);
  detail::put_u32(out, static_cast<std::uint32_t>(lattice.side()));
  detail::put_u32(out, path.start);
  detail::put_u64(out, path.steps.size());
  out.append(reinterpret_cast<const char*>(path.steps.data()), path.steps.size());
  return out;
}

inline WalkPath decode_path(const std::string& bytes, const Lattice& lattice) {
  constexpr std::size_t header = 24;
  detail::require(bytes.size() >= header && bytes.compare(0, 4, "PWWP") == 0,
                  "not a path stream");
  detail::require(detail::get_uint(bytes, 4, 2) == 1, "unsupported path stream version");
  detail::require(static_cast<int>(detail::get_uint(bytes, 6, 1)) == lattice.dim() &&
                      static_cast<int>(detail::get_uint(bytes, 8, 4)) == lattice.side(),
                  "path stream lattice does not match");
  WalkPath path;
  path.start = static_cast<Site>(detail::get_uint(bytes, 12, 4));
  const auto n = detail::get_uint(bytes, 16, 8);
  detail::require(bytes.size() == header + n, "path stream length mismatch");
  path.steps.resize(n);
  std::memcpy(path.steps.data(), bytes.data() + header, n);
  for (Direction dir : path.steps)
    detail::require(dir < lattice.direction_count(), "direction byte out of range");
  return path;
}

/// Sparse measure on (site, direction) pairs; atoms sorted by (site, direction).
struct PairEmpiricalMeasure {
  struct Atom {
    Site site;
    Direction direction;
    double weight;
    friend bool operator==(const Atom&, const Atom&) = default;
  };
  std::vector<Atom> atoms;
  std::size_t n = 0;

  double total() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.weight;
    return s;
  }
  double weight(Site x, Direction dir) const {
    const auto it = std::lower_bound(atoms.begin(), atoms.end(), std::make_pair(x, dir),
                                     [](const Atom& a, const std::pair<Site, Direction>& k) {
                                       return std::make_pair(a.site, a.direction) < k;
                                     });
    return (it != atoms.end() && it->site == x && it->direction == dir) ? it->weight : 0.0;
  }
};

/// Occupation measure of (X_k, X_{k+1} - X_k), k < n, each with weight 1/n.
inline PairEmpiricalMeasure pair_empirical_measure(const WalkPath& path, const Lattice& lattice) {
  if (path.steps.empty()) throw EmptyPath("pair empirical measure of a path with no steps");
  const int dirs = lattice.direction_count();
  std::vector<std::pair<std::uint64_t, std::size_t>> counts;
  std::vector<std::uint64_t> keys;
  keys.reserve(path.steps.size());
  Site x = path.start;
  for (Direction dir : path.steps) {
    keys.push_back(static_cast<std::uint64_t>(x) * dirs + dir);
    x = lattice.neighbor(x, dir);
  }
  std::sort(keys.begin(), keys.end());
  PairEmpiricalMeasure mu;
  mu.n = path.steps.size();
  const double n = static_cast<double>(mu.n);
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    mu.atoms.push_back({static_cast<Site>(keys[i] / dirs), static_cast<Direction>(keys[i] % dirs),
                        static_cast<double>(j - i) / n});
    i = j;
  }
  return mu;
}

struct Marginals {
  std::vector<std::pair<Site, double>> first;   ///< sum_e mu(x, e)
  std::vector<std::pair<Site, double>> second;  ///< sum_e mu(x - e, e)
  double gap = 0.0;                             ///< l1 distance between the two
};

inline Marginals measure_marginals(const PairEmpiricalMeasure& mu, const Lattice& lattice) {
  std::vector<std::pair<Site, double>> first, second;
  for (const auto& a : mu.atoms) {
    first.emplace_back(a.site, a.weight);
    second.emplace_back(lattice.neighbor(a.site, a.direction), a.weight);
  }
  auto collapse = [](std::vector<std::pair<Site, double>>& v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<Site, double>> out;
    for (const auto& [x, w] : v) {
      if (!out.empty() && out.back().first == x)
        out.back().second += w;
      else
        out.emplace_back(x, w);
    }
    v = std::move(out);
  };
  collapse(first);
  collapse(second);
  Marginals m;
  std::size_t i = 0, j = 0;
  while (i < first.size() || j < second.size()) {
    if (j == second.size() || (i < first.size() && first[i].first < second[j].first)) {
      m.gap += std::abs(first[i++].second);
    } else if (i == first.size() || second[j].first < first[i].first) {
      m.gap += std::abs(second[j++].second);
    } else {
      m.gap += std::abs(first[i++].second - second[j++].second);
    }
  }
  m.first = std::move(first);
  m.second = std::move(second);
  return m;
}

/// CSV with header "site,direction,weight"; weights in shortest round-trip form.
inline std::string measure_to_csv(const PairEmpiricalMeasure& mu) {
  std::string out = "site,direction,weight\n";
  for (const auto& a : mu.atoms)
    out += std::to_string(a.site) + "," + std::to_string(a.direction) + "," +
           format_double(a.weight) + "\n";
  return out;
}

inline PairEmpiricalMeasure measure_from_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  detail::require(!rows.empty() && rows[0] == std::vector<std::string>{"site", "direction", "weight"},
                  "measure CSV header mismatch");
  PairEmpiricalMeasure mu;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    detail::require(rows[r].size() == 3, "measure CSV row must have 3 cells");
    mu.atoms.push_back({static_cast<Site>(parse_int(rows[r][0])),
                        static_cast<Direction>(parse_int(rows[r][1])), parse_double(rows[r][2])});
  }
  return mu;
}

}  // namespace percwalk
