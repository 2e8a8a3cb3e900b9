#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "percwalk/error.hpp"
#include "percwalk/lattice.hpp"

namespace percwalk {

enum class PercolationKind : std::uint8_t { bond = 0, site = 1 };

enum class ModelTag : std::uint8_t {
  bernoulli_bond = 0,
  bernoulli_site = 1,
  random_cluster = 2,
  interlacement = 3,
  vacant_set = 4,
  gff_level_set = 5,
};

inline constexpr std::string_view model_name(ModelTag tag) noexcept {
  switch (tag) {
    case ModelTag::bernoulli_bond: return "bernoulli-bond";
    case ModelTag::bernoulli_site: return "bernoulli-site";
    case ModelTag::random_cluster: return "random-cluster";
    case ModelTag::interlacement: return "interlacement";
    case ModelTag::vacant_set: return "vacant-set";
    case ModelTag::gff_level_set: return "gff-level-set";
  }
  return "unknown";
}

inline ModelTag parse_model(std::string_view name) {
  for (int i = 0; i <= 5; ++i) {
    const auto tag = static_cast<ModelTag>(i);
    if (model_name(tag) == name) return tag;
  }
  throw InvalidArgument("unknown model '" + std::string(name) + "'");
}

inline constexpr PercolationKind kind_of(ModelTag tag) noexcept {
  return (tag == ModelTag::bernoulli_bond || tag == ModelTag::random_cluster)
             ? PercolationKind::bond
             : PercolationKind::site;
}

/// Parameters of one percolation model; only the fields the tag uses matter.
struct ModelParams {
  ModelTag model = ModelTag::bernoulli_bond;
  double p = 0.5;
  double q = 1.0;
  double u = 1.0;
  double h = 0.0;
  std::uint32_t sweeps = 200;
  std::uint64_t seed = 0;

  void validate(const Lattice& lattice) const {
    switch (model) {
      case ModelTag::bernoulli_bond:
      case ModelTag::bernoulli_site:
        detail::require(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
        break;
      case ModelTag::random_cluster:
        detail::require(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
        detail::require(q >= 1.0, "random-cluster requires q >= 1");
        detail::require(sweeps >= 1, "random-cluster requires sweeps >= 1");
        detail::require(lattice.periodic(), "random-cluster is sampled on a torus");
        break;
      case ModelTag::interlacement:
      case ModelTag::vacant_set:
        detail::require(std::isfinite(u) && u > 0.0, "interlacement requires u > 0");
        detail::require(lattice.dim() >= 3, "interlacements require d >= 3");
        detail::require(lattice.periodic(), "interlacements are sampled on a torus");
        break;
      case ModelTag::gff_level_set:
        detail::require(std::isfinite(h), "h must be finite");
        detail::require(lattice.dim() >= 3, "GFF level sets require d >= 3");
        detail::require(!lattice.periodic(), "GFF is sampled on a Dirichlet box");
        break;
    }
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// A percolation configuration: one open bit per edge (bond models) or per
/// site (site models). Immutable once built.
class Configuration {
 public:
  Configuration(Lattice lattice, PercolationKind kind, std::vector<std::uint8_t> bits,
                ModelParams params = {})
      : lattice_(std::move(lattice)), kind_(kind), bits_(std::move(bits)), params_(params) {
    const std::size_t expected =
        kind_ == PercolationKind::bond ? lattice_.edge_count() : lattice_.site_count();
    detail::require(bits_.size() == expected, "bit array length does not match the lattice");
    for (auto& b : bits_) b = b ? 1 : 0;
    if (kind_ == PercolationKind::bond && !lattice_.periodic()) {
      for (EdgeIndex e = 0; e < bits_.size(); ++e)
        if (!lattice_.edge_exists(e)) bits_[e] = 0;
    }
  }

  static Configuration all_open(const Lattice& lattice, PercolationKind kind) {
    const std::size_t n =
        kind == PercolationKind::bond ? lattice.edge_count() : lattice.site_count();
    ModelParams params;
    params.model = kind == PercolationKind::bond ? ModelTag::bernoulli_bond
                                                 : ModelTag::bernoulli_site;
    params.p = 1.0;
    return Configuration(lattice, kind, std::vector<std::uint8_t>(n, 1), params);
  }

  const Lattice& lattice() const noexcept { return lattice_; }
  PercolationKind kind() const noexcept { return kind_; }
  const ModelParams& params() const noexcept { return params_; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  bool edge_open(EdgeIndex e) const noexcept { return e != kNoEdge && bits_[e] != 0; }
  bool site_open(Site x) const noexcept {
    return kind_ == PercolationKind::bond || bits_[x] != 0;
  }

  /// Whether a nearest-neighbour step from x in direction dir stays on open
  /// edges (bond) or open sites (site).
  bool step_open(Site x, Direction dir) const noexcept {
    if (kind_ == PercolationKind::bond) return edge_open(lattice_.edge(x, dir));
    const Site y = lattice_.neighbor(x, dir);
    return y != kNoSite && bits_[x] != 0 && bits_[y] != 0;
  }

  std::size_t open_count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  /// Open fraction over the elements that exist (edges leaving a box excluded).
  double open_fraction() const noexcept {
    std::size_t total = bits_.size();
    if (kind_ == PercolationKind::bond && !lattice_.periodic()) {
      total = 0;
      for (EdgeIndex e = 0; e < bits_.size(); ++e) total += lattice_.edge_exists(e);
    }
    return total == 0 ? 0.0 : static_cast<double>(open_count()) / static_cast<double>(total);
  }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.lattice_ == b.lattice_ && a.kind_ == b.kind_ && a.bits_ == b.bits_ &&
           a.params_ == b.params_;
  }

 private:
  Lattice lattice_;
  PercolationKind kind_;
  std::vector<std::uint8_t> bits_;
  ModelParams params_;
};

}  // namespace percwalk
