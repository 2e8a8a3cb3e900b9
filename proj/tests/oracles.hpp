#pragma once
// Independent reference implementations used only by the tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <vector>

#include "percwalk/configuration.hpp"
#include "percwalk/lattice.hpp"

namespace oracle {

using percwalk::Configuration;
using percwalk::Direction;
using percwalk::Lattice;
using percwalk::Site;

/// Flood-fill component labels; -1 for closed sites of a site model.
inline std::vector<int> flood_fill(const Configuration& c) {
  const Lattice& lat = c.lattice();
  std::vector<int> label(lat.site_count(), -1);
  int next = 0;
  for (Site s = 0; s < lat.site_count(); ++s) {
    if (label[s] != -1 || !c.site_open(s)) continue;
    std::queue<Site> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      const Site x = q.front();
      q.pop();
      for (int d = 0; d < lat.direction_count(); ++d) {
        if (!c.step_open(x, static_cast<Direction>(d))) continue;
        const Site y = lat.neighbor(x, static_cast<Direction>(d));
        if (label[y] == -1) {
          label[y] = next;
          q.push(y);
        }
      }
    }
    ++next;
  }
  return label;
}

/// Shortest open-path length by plain BFS, -1 if unreachable.
inline int bfs_distance(const Configuration& c, Site a, Site b) {
  const Lattice& lat = c.lattice();
  std::vector<int> dist(lat.site_count(), -1);
  std::queue<Site> q;
  dist[a] = 0;
  q.push(a);
  while (!q.empty()) {
    const Site x = q.front();
    q.pop();
    if (x == b) return dist[x];
    for (int d = 0; d < lat.direction_count(); ++d) {
      if (!c.step_open(x, static_cast<Direction>(d))) continue;
      const Site y = lat.neighbor(x, static_cast<Direction>(d));
      if (dist[y] == -1) {
        dist[y] = dist[x] + 1;
        q.push(y);
      }
    }
  }
  return -1;
}

/// Number of connected components of the torus graph whose open edges are the
/// set bits of `mask` (edge e is bit e).
inline int cluster_count(const Lattice& lat, std::uint64_t mask) {
  std::vector<int> parent(lat.site_count());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  int count = static_cast<int>(lat.site_count());
  for (std::uint64_t e = 0; e < lat.edge_count(); ++e) {
    if (!((mask >> e) & 1)) continue;
    const int a = find(static_cast<int>(lat.edge_tail(e)));
    const int b = find(static_cast<int>(lat.edge_head(e)));
    if (a != b) {
      parent[a] = b;
      --count;
    }
  }
  return count;
}

/// Exact random-cluster law on a tiny torus by enumeration of all 2^|E| states.
inline std::vector<double> random_cluster_law(const Lattice& lat, double p, double q) {
  const std::size_t edges = lat.edge_count();
  const std::uint64_t states = std::uint64_t{1} << edges;
  std::vector<double> w(states);
  double total = 0.0;
  for (std::uint64_t m = 0; m < states; ++m) {
    const int open = __builtin_popcountll(m);
    w[m] = std::pow(p, open) * std::pow(1 - p, static_cast<double>(edges) - open) *
           std::pow(q, cluster_count(lat, m));
    total += w[m];
  }
  for (double& x : w) x /= total;
  return w;
}

/// Inverse of a dense matrix by Gauss-Jordan elimination with partial pivoting.
inline std::vector<std::vector<double>> invert(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(inv[c], inv[piv]);
    const double d = a[c][c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c][k] /= d;
      inv[c][k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || a[r][c] == 0.0) continue;
      const double f = a[r][c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r][k] -= f * a[c][k];
        inv[r][k] -= f * inv[c][k];
      }
    }
  }
  return inv;
}

/// Green function of simple random walk killed on leaving the interior of a
/// Dirichlet box: solves (I - P_killed) G = I directly.
inline std::vector<std::vector<double>> killed_green(const Lattice& box, std::vector<Site>& interior) {
  interior.clear();
  std::map<Site, std::size_t> index;
  for (Site x = 0; x < box.site_count(); ++x)
    if (box.interior(x)) {
      index[x] = interior.size();
      interior.push_back(x);
    }
  const std::size_t n = interior.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  const double w = 1.0 / box.direction_count();
  for (std::size_t i = 0; i < n; ++i) {
    m[i][i] = 1.0;
    for (int d = 0; d < box.direction_count(); ++d) {
      const Site y = box.neighbor(interior[i], static_cast<Direction>(d));
      auto it = index.find(y);
      if (y != percwalk::kNoSite && it != index.end()) m[i][it->second] -= w;
    }
  }
  return invert(m);
}

/// Maximum of a unimodal function on [a, b] by golden-section search.
inline double golden_max(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double r = (std::sqrt(5.0) - 1) / 2;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return f(0.5 * (a + b));
}

}  // namespace oracle
