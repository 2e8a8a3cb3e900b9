#pragma once

#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "percwalk/error.hpp"

namespace percwalk {

using Site = std::uint32_t;
using EdgeIndex = std::uint64_t;

/// Lattice step direction. Direction 2i is +e_i and 2i+1 is -e_i.
using Direction = std::uint8_t;

inline constexpr Site kNoSite = std::numeric_limits<Site>::max();
inline constexpr EdgeIndex kNoEdge = std::numeric_limits<EdgeIndex>::max();

enum class Boundary : std::uint8_t { periodic = 0, dirichlet = 1 };

inline constexpr int axis_of(Direction dir) noexcept { return dir >> 1; }
inline constexpr int sign_of(Direction dir) noexcept { return (dir & 1) ? -1 : 1; }
inline constexpr Direction opposite(Direction dir) noexcept { return dir ^ 1; }
inline constexpr Direction positive_direction(int axis) noexcept {
  return static_cast<Direction>(2 * axis);
}

/// Hypercubic lattice of side L in dimension d, either a torus or a box with
/// Dirichlet (absorbing) faces.
///
/// Sites are indexed in mixed radix with coordinate 0 varying slowest. Edge
/// (x, i) joins x and x + e_i and has index x*d + i; in a Dirichlet box edges
/// leaving the box exist as indices but never carry an open bit.
class Lattice {
 public:
  Lattice(int dim, int side, Boundary boundary = Boundary::periodic)
      : dim_(dim), side_(side), boundary_(boundary) {
    detail::require(dim >= 1 && dim <= 16, "lattice dimension must be in [1, 16]");
    detail::require(side >= 2, "lattice side must be >= 2");
    strides_.assign(dim, 1);
    std::uint64_t count = 1;
    for (int i = dim - 1; i >= 0; --i) {
      strides_[i] = count;
      count *= static_cast<std::uint64_t>(side);
      detail::require(count < kNoSite, "lattice has too many sites");
    }
    sites_ = count;
  }

  int dim() const noexcept { return dim_; }
  int side() const noexcept { return side_; }
  Boundary boundary() const noexcept { return boundary_; }
  bool periodic() const noexcept { return boundary_ == Boundary::periodic; }
  std::size_t site_count() const noexcept { return sites_; }
  std::size_t edge_count() const noexcept { return sites_ * static_cast<std::size_t>(dim_); }
  int direction_count() const noexcept { return 2 * dim_; }

  int coordinate(Site x, int axis) const noexcept {
    return static_cast<int>((x / strides_[axis]) % static_cast<std::uint64_t>(side_));
  }

  std::vector<int> coordinates(Site x) const {
    std::vector<int> c(dim_);
    for (int i = 0; i < dim_; ++i) c[i] = coordinate(x, i);
    return c;
  }

  /// Site at the given coordinates, reduced modulo L on a torus.
  Site site(const std::vector<int>& coords) const {
    detail::require(static_cast<int>(coords.size()) == dim_, "coordinate count != dimension");
    std::uint64_t x = 0;
    for (int i = 0; i < dim_; ++i) {
      int c = coords[i];
      if (periodic()) {
        c %= side_;
        if (c < 0) c += side_;
      } else if (c < 0 || c >= side_) {
        return kNoSite;
      }
      x += static_cast<std::uint64_t>(c) * strides_[i];
    }
    return static_cast<Site>(x);
  }

  /// Neighbour of x in direction dir, or kNoSite when it leaves a Dirichlet box.
  Site neighbor(Site x, Direction dir) const noexcept {
    const int axis = axis_of(dir);
    const int c = coordinate(x, axis);
    const auto stride = strides_[axis];
    if (sign_of(dir) > 0) {
      if (c + 1 < side_) return static_cast<Site>(x + stride);
      return periodic() ? static_cast<Site>(x - stride * (side_ - 1)) : kNoSite;
    }
    if (c > 0) return static_cast<Site>(x - stride);
    return periodic() ? static_cast<Site>(x + stride * (side_ - 1)) : kNoSite;
  }

  /// Undirected edge crossed when stepping from x in direction dir.
  EdgeIndex edge(Site x, Direction dir) const noexcept {
    const int axis = axis_of(dir);
    if (sign_of(dir) > 0) {
      if (!periodic() && coordinate(x, axis) == side_ - 1) return kNoEdge;
      return static_cast<EdgeIndex>(x) * dim_ + axis;
    }
    const Site y = neighbor(x, dir);
    if (y == kNoSite) return kNoEdge;
    return static_cast<EdgeIndex>(y) * dim_ + axis;
  }

  /// True when the edge joins two sites of the lattice.
  bool edge_exists(EdgeIndex e) const noexcept {
    const auto x = static_cast<Site>(e / dim_);
    const int axis = static_cast<int>(e % dim_);
    return periodic() || coordinate(x, axis) + 1 < side_;
  }

  Site edge_tail(EdgeIndex e) const noexcept { return static_cast<Site>(e / dim_); }
  Site edge_head(EdgeIndex e) const noexcept {
    return neighbor(edge_tail(e), positive_direction(static_cast<int>(e % dim_)));
  }

  /// Coordinate difference y - x along one axis, folded into (-L/2, L/2] on a torus.
  int axis_offset(Site x, Site y, int axis) const noexcept {
    int delta = coordinate(y, axis) - coordinate(x, axis);
    if (periodic()) {
      delta %= side_;
      if (delta < 0) delta += side_;
      if (2 * delta > side_) delta -= side_;
    }
    return delta;
  }

  /// l1 distance, using the torus metric when periodic.
  int l1_distance(Site x, Site y) const noexcept {
    int total = 0;
    for (int i = 0; i < dim_; ++i) total += std::abs(axis_offset(x, y, i));
    return total;
  }

  /// Sites of a Dirichlet box not on its faces; every site of a torus.
  bool interior(Site x) const noexcept {
    if (periodic()) return true;
    for (int i = 0; i < dim_; ++i) {
      const int c = coordinate(x, i);
      if (c == 0 || c == side_ - 1) return false;
    }
    return true;
  }

  std::string describe() const {
    return "d=" + std::to_string(dim_) + " L=" + std::to_string(side_) +
           (periodic() ? " torus" : " dirichlet");
  }

  friend bool operator==(const Lattice& a, const Lattice& b) noexcept {
    return a.dim_ == b.dim_ && a.side_ == b.side_ && a.boundary_ == b.boundary_;
  }

 private:
  int dim_;
  int side_;
  Boundary boundary_;
  std::vector<std::uint64_t> strides_;
  std::size_t sites_ = 0;
};

}  // namespace percwalk
