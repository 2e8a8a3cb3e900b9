#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "percwalk/configuration.hpp"
#include "percwalk/error.hpp"
#include "percwalk/lattice.hpp"
#include "percwalk/montecarlo.hpp"

namespace percwalk {

enum class ExperimentKind { sample, geometry, rate, dual, mc, speed };

inline constexpr std::string_view kind_name(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::sample: return "sample";
    case ExperimentKind::geometry: return "geometry";
    case ExperimentKind::rate: return "rate";
    case ExperimentKind::dual: return "dual";
    case ExperimentKind::mc: return "mc";
    case ExperimentKind::speed: return "speed";
  }
  return "unknown";
}

inline std::optional<ExperimentKind> parse_kind(std::string_view name) noexcept {
  for (int i = 0; i <= 5; ++i)
    if (kind_name(static_cast<ExperimentKind>(i)) == name) return static_cast<ExperimentKind>(i);
  return std::nullopt;
}

struct ThetaGridSpec {
  double lo = -1.0;
  double hi = 1.0;
  int points = 9;
  friend bool operator==(const ThetaGridSpec&, const ThetaGridSpec&) = default;
};

/// One experiment, fully determined by this record. Only the fields of the
/// selected kind are serialized; the rest keep their defaults.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::sample;
  std::uint64_t seed = 0;
  std::string output;  ///< run directory; empty selects the default root
  unsigned threads = 1;

  int dim = 2;
  int side = 16;
  Boundary boundary = Boundary::periodic;
  ModelParams model;  ///< model.seed is derived from `seed` per sample

  std::size_t count = 1;  ///< sample: configurations written

  std::size_t samples = 1;      ///< geometry: environments pooled
  std::size_t pairs = 20000;    ///< geometry: chemical-distance pair budget
  std::size_t fit_floor = 10;   ///< geometry: minimum exceedances per fitted tail point

  ThetaGridSpec grid;                             ///< rate
  std::vector<std::vector<double>> velocities;    ///< rate
  bool refine = false;                            ///< rate: Newton polish of J

  std::vector<std::vector<double>> thetas;        ///< dual, mc
  std::vector<double> schedule;                   ///< dual; empty selects the solver default
  std::vector<int> radii;                         ///< dual: sublinearity radii

  std::size_t steps = 500;                        ///< mc, speed
  std::size_t walks = 1000;                       ///< mc, speed
  std::vector<EstimatorKind> estimators{EstimatorKind::naive, EstimatorKind::tilted};  ///< mc

  std::vector<double> betas;                      ///< speed
  bool control = true;                            ///< speed: full-lattice control run

  Lattice lattice() const { return Lattice(dim, side, boundary); }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace schema {

using nlohmann::json;

inline std::string join(const std::string& path, std::string_view key) { return path + "/" + std::string(key); }
inline std::string join(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

inline const json& object_at(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  return j;
}

inline void allow_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> keys) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto k : keys) known = known || k == key;
    if (!known) throw SchemaError(join(path, key), "unknown field");
  }
}

inline const json* find(const json& j, std::string_view key) {
  const auto it = j.find(std::string(key));
  return it == j.end() ? nullptr : &*it;
}

inline const json& required(const json& j, const std::string& path, std::string_view key) {
  const json* v = find(j, key);
  if (!v) throw SchemaError(join(path, key), "missing required field");
  return *v;
}

inline double number(const json& v, const std::string& path, double lo, double hi) {
  if (!v.is_number()) throw SchemaError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x) || x < lo || x > hi)
    throw SchemaError(path, "must lie in [" + format_double(lo) + ", " + format_double(hi) + "]");
  return x;
}

inline std::uint64_t integer(const json& v, const std::string& path, std::uint64_t lo, std::uint64_t hi) {
  if (!v.is_number_integer()) throw SchemaError(path, "expected an integer");
  if (v.is_number_unsigned()) {
    const auto x = v.get<std::uint64_t>();
    if (x < lo || x > hi) throw SchemaError(path, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
  }
  const auto x = v.get<std::int64_t>();
  if (x < 0 || static_cast<std::uint64_t>(x) < lo || static_cast<std::uint64_t>(x) > hi)
    throw SchemaError(path, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<std::uint64_t>(x);
}

inline std::string string(const json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path, "expected a string");
  return v.get<std::string>();
}

inline bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw SchemaError(path, "expected a boolean");
  return v.get<bool>();
}

inline const json& array(const json& v, const std::string& path, std::size_t min_size) {
  if (!v.is_array()) throw SchemaError(path, "expected an array");
  if (v.size() < min_size) throw SchemaError(path, "needs at least " + std::to_string(min_size) + " entries");
  return v;
}

inline std::vector<double> vector(const json& v, const std::string& path, std::size_t size, double lo, double hi) {
  array(v, path, size);
  if (v.size() != size) throw SchemaError(path, "needs exactly " + std::to_string(size) + " entries");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], join(path, i), lo, hi));
  return out;
}

inline std::vector<std::vector<double>> vectors(const json& v, const std::string& path, std::size_t size,
                                                double lo, double hi) {
  array(v, path, 1);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(vector(v[i], join(path, i), size, lo, hi));
  return out;
}

inline constexpr std::uint64_t kMaxSites = std::uint64_t{1} << 28;
inline constexpr double kMaxTheta = 50.0;

}  // namespace schema

/// Parse and validate an experiment config. Every failure is a SchemaError
/// naming the offending field as a JSON pointer.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using namespace schema;
  ExperimentConfig c;
  object_at(j, "");
  allow_keys(j, "", {"kind", "seed", "output", "threads", "lattice", "model", "sample", "geometry", "rate",
                     "dual", "mc", "speed"});
  const auto kind = parse_kind(string(required(j, "", "kind"), "/kind"));
  if (!kind) throw SchemaError("/kind", "must be one of sample, geometry, rate, dual, mc, speed");
  c.kind = *kind;
  c.seed = integer(required(j, "", "seed"), "/seed", 0, std::numeric_limits<std::uint64_t>::max());
  if (const json* v = find(j, "output")) {
    c.output = string(*v, "/output");
    if (c.output.empty()) throw SchemaError("/output", "must not be empty");
  }
  if (const json* v = find(j, "threads")) c.threads = static_cast<unsigned>(integer(*v, "/threads", 1, 1024));

  const json& lat = object_at(required(j, "", "lattice"), "/lattice");
  allow_keys(lat, "/lattice", {"dim", "side", "boundary"});
  c.dim = static_cast<int>(integer(required(lat, "/lattice", "dim"), "/lattice/dim", 1, 16));
  c.side = static_cast<int>(integer(required(lat, "/lattice", "side"), "/lattice/side", 2, 1u << 20));
  if (const json* v = find(lat, "boundary")) {
    const auto b = string(*v, "/lattice/boundary");
    if (b == "torus") c.boundary = Boundary::periodic;
    else if (b == "dirichlet") c.boundary = Boundary::dirichlet;
    else throw SchemaError("/lattice/boundary", "must be torus or dirichlet");
  }
  {
    double sites = 1.0;
    for (int i = 0; i < c.dim; ++i) sites *= c.side;
    if (sites > static_cast<double>(kMaxSites)) throw SchemaError("/lattice", "more than 2^28 sites");
  }

  const json& model = object_at(required(j, "", "model"), "/model");
  allow_keys(model, "/model", {"type", "p", "q", "u", "h", "sweeps"});
  try {
    c.model.model = parse_model(string(required(model, "/model", "type"), "/model/type"));
  } catch (const InvalidArgument&) {
    throw SchemaError("/model/type",
                      "must be one of bernoulli-bond, bernoulli-site, random-cluster, interlacement, "
                      "vacant-set, gff-level-set");
  }
  switch (c.model.model) {
    case ModelTag::bernoulli_bond:
    case ModelTag::bernoulli_site:
      c.model.p = number(required(model, "/model", "p"), "/model/p", 0.0, 1.0);
      break;
    case ModelTag::random_cluster:
      c.model.p = number(required(model, "/model", "p"), "/model/p", 0.0, 1.0);
      c.model.q = number(required(model, "/model", "q"), "/model/q", 1.0, 1e6);
      break;
    case ModelTag::interlacement:
    case ModelTag::vacant_set:
      c.model.u = number(required(model, "/model", "u"), "/model/u", 1e-12, 1e6);
      break;
    case ModelTag::gff_level_set:
      c.model.h = number(required(model, "/model", "h"), "/model/h", -1e6, 1e6);
      break;
  }
  if (const json* v = find(model, "sweeps")) c.model.sweeps = static_cast<std::uint32_t>(integer(*v, "/model/sweeps", 1, 1u << 30));
  try {
    c.model.validate(c.lattice());
  } catch (const InvalidArgument& e) {
    throw SchemaError("/model", e.what());
  }

  for (int i = 0; i <= 5; ++i) {
    const auto other = static_cast<ExperimentKind>(i);
    if (other != c.kind && find(j, kind_name(other)))
      throw SchemaError(join("", kind_name(other)), "section does not match kind '" + std::string(kind_name(c.kind)) + "'");
  }
  static const json empty = json::object();
  const std::string sec = join("", kind_name(c.kind));
  const json* section_ptr = find(j, kind_name(c.kind));
  const json& s = section_ptr ? object_at(*section_ptr, sec) : empty;
  const auto d = static_cast<std::size_t>(c.dim);

  switch (c.kind) {
    case ExperimentKind::sample:
      allow_keys(s, sec, {"count"});
      if (const json* v = find(s, "count")) c.count = integer(*v, sec + "/count", 1, 100000);
      break;
    case ExperimentKind::geometry:
      allow_keys(s, sec, {"samples", "pairs", "fit_floor"});
      if (const json* v = find(s, "samples")) c.samples = integer(*v, sec + "/samples", 1, 100000);
      if (const json* v = find(s, "pairs")) c.pairs = integer(*v, sec + "/pairs", 100, 1u << 30);
      if (const json* v = find(s, "fit_floor")) c.fit_floor = integer(*v, sec + "/fit_floor", 1, 1u << 30);
      break;
    case ExperimentKind::rate: {
      allow_keys(s, sec, {"theta", "velocities", "refine"});
      if (const json* v = find(s, "theta")) {
        const std::string tp = sec + "/theta";
        const json& t = object_at(*v, tp);
        allow_keys(t, tp, {"lo", "hi", "points"});
        c.grid.lo = number(required(t, tp, "lo"), tp + "/lo", -kMaxTheta, kMaxTheta);
        c.grid.hi = number(required(t, tp, "hi"), tp + "/hi", -kMaxTheta, kMaxTheta);
        c.grid.points = static_cast<int>(integer(required(t, tp, "points"), tp + "/points", 3, 401));
        if (c.grid.hi <= c.grid.lo) throw SchemaError(tp + "/hi", "must exceed lo");
      }
      double grid_size = 1.0;
      for (std::size_t i = 0; i < d; ++i) grid_size *= c.grid.points;
      if (grid_size > 1e6) throw SchemaError(sec + "/theta/points", "grid has more than 10^6 points");
      if (const json* v = find(s, "velocities")) c.velocities = vectors(*v, sec + "/velocities", d, -1e3, 1e3);
      if (const json* v = find(s, "refine")) c.refine = boolean(*v, sec + "/refine");
      break;
    }
    case ExperimentKind::dual:
      allow_keys(s, sec, {"theta", "schedule", "radii"});
      c.thetas = vectors(required(s, sec, "theta"), sec + "/theta", d, -kMaxTheta, kMaxTheta);
      if (const json* v = find(s, "schedule")) {
        array(*v, sec + "/schedule", 1);
        for (std::size_t i = 0; i < v->size(); ++i) {
          const double eps = number((*v)[i], join(sec + "/schedule", i), 1e-12, 1e6);
          if (eps <= 0.0) throw SchemaError(join(sec + "/schedule", i), "must be positive");
          if (i > 0 && eps >= c.schedule.back()) throw SchemaError(join(sec + "/schedule", i), "schedule must decrease");
          c.schedule.push_back(eps);
        }
      }
      if (const json* v = find(s, "radii")) {
        array(*v, sec + "/radii", 1);
        for (std::size_t i = 0; i < v->size(); ++i)
          c.radii.push_back(static_cast<int>(integer((*v)[i], join(sec + "/radii", i), 1, 1u << 20)));
      }
      break;
    case ExperimentKind::mc:
      allow_keys(s, sec, {"theta", "steps", "walks", "estimators"});
      c.thetas = vectors(required(s, sec, "theta"), sec + "/theta", d, -kMaxTheta, kMaxTheta);
      if (const json* v = find(s, "steps")) c.steps = integer(*v, sec + "/steps", 1, 1ull << 40);
      if (const json* v = find(s, "walks")) c.walks = integer(*v, sec + "/walks", 100, 1ull << 40);
      if (const json* v = find(s, "estimators")) {
        array(*v, sec + "/estimators", 1);
        c.estimators.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
          const auto name = string((*v)[i], join(sec + "/estimators", i));
          if (name == "naive") c.estimators.push_back(EstimatorKind::naive);
          else if (name == "tilted") c.estimators.push_back(EstimatorKind::tilted);
          else throw SchemaError(join(sec + "/estimators", i), "must be naive or tilted");
        }
      }
      break;
    case ExperimentKind::speed:
      allow_keys(s, sec, {"betas", "steps", "walks", "control"});
      {
        const json& b = array(required(s, sec, "betas"), sec + "/betas", 1);
        for (std::size_t i = 0; i < b.size(); ++i) {
          const double beta = number(b[i], join(sec + "/betas", i), 0.0, 1e6);
          if (beta <= 0.0) throw SchemaError(join(sec + "/betas", i), "must be positive");
          c.betas.push_back(beta);
        }
      }
      if (const json* v = find(s, "steps")) c.steps = integer(*v, sec + "/steps", 1, 1ull << 40);
      if (const json* v = find(s, "walks")) c.walks = integer(*v, sec + "/walks", 100, 1ull << 40);
      if (const json* v = find(s, "control")) c.control = boolean(*v, sec + "/control");
      break;
  }
  return c;
}

/// Canonical JSON form; config_from_json(config_to_json(c)) == c.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j;
  j["kind"] = std::string(kind_name(c.kind));
  j["seed"] = c.seed;
  if (!c.output.empty()) j["output"] = c.output;
  j["threads"] = c.threads;
  j["lattice"] = {{"dim", c.dim}, {"side", c.side}, {"boundary", c.boundary == Boundary::periodic ? "torus" : "dirichlet"}};
  json m{{"type", std::string(model_name(c.model.model))}, {"sweeps", c.model.sweeps}};
  switch (c.model.model) {
    case ModelTag::bernoulli_bond:
    case ModelTag::bernoulli_site: m["p"] = c.model.p; break;
    case ModelTag::random_cluster: m["p"] = c.model.p; m["q"] = c.model.q; break;
    case ModelTag::interlacement:
    case ModelTag::vacant_set: m["u"] = c.model.u; break;
    case ModelTag::gff_level_set: m["h"] = c.model.h; break;
  }
  j["model"] = m;
  json s = json::object();
  switch (c.kind) {
    case ExperimentKind::sample: s["count"] = c.count; break;
    case ExperimentKind::geometry:
      s["samples"] = c.samples;
      s["pairs"] = c.pairs;
      s["fit_floor"] = c.fit_floor;
      break;
    case ExperimentKind::rate:
      s["theta"] = {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"points", c.grid.points}};
      if (!c.velocities.empty()) s["velocities"] = c.velocities;
      s["refine"] = c.refine;
      break;
    case ExperimentKind::dual:
      s["theta"] = c.thetas;
      if (!c.schedule.empty()) s["schedule"] = c.schedule;
      if (!c.radii.empty()) s["radii"] = c.radii;
      break;
    case ExperimentKind::mc: {
      s["theta"] = c.thetas;
      s["steps"] = c.steps;
      s["walks"] = c.walks;
      json names = json::array();
      for (auto e : c.estimators) names.push_back(estimator_name(e));
      s["estimators"] = names;
      break;
    }
    case ExperimentKind::speed:
      s["betas"] = c.betas;
      s["steps"] = c.steps;
      s["walks"] = c.walks;
      s["control"] = c.control;
      break;
  }
  j[std::string(kind_name(c.kind))] = s;
  return j;
}

/// Parse config text; malformed JSON is a SchemaError at the root.
inline ExperimentConfig config_from_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace percwalk
