#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "percwalk/chain.hpp"
#include "percwalk/clusters.hpp"
#include "percwalk/error.hpp"
#include "percwalk/montecarlo.hpp"
#include "percwalk/text.hpp"

namespace percwalk {

/// Solver results for one tilt theta . e.
struct DualRow {
  std::vector<double> theta;
  double variational = 0.0;  ///< sup over invariant pairs, a lower value
  double perron = 0.0;       ///< log Perron root
  double dual_upper = 0.0;   ///< Lambda(f, G) at the final eps
  double dual_lower = 0.0;   ///< penalized value at the final eps
  double gap = 0.0;          ///< dual_upper - variational
  bool converged = false;
  double loop_residual = 0.0;
  double shift_covariance_residual = 0.0;
  double induced_mean_max = 0.0;
  double max_abs_G = 0.0;
  std::vector<int> radii;
  std::vector<double> profile;
  std::vector<DualStage> stages;
  friend bool operator==(const DualRow& a, const DualRow& b) {
    if (a.stages.size() != b.stages.size()) return false;
    for (std::size_t i = 0; i < a.stages.size(); ++i) {
      const auto &x = a.stages[i], &y = b.stages[i];
      if (x.eps != y.eps || x.penalized_value != y.penalized_value || x.value != y.value || x.gap != y.gap ||
          x.iterations != y.iterations || x.gradient_norm != y.gradient_norm || x.converged != y.converged)
        return false;
    }
    return a.theta == b.theta && a.variational == b.variational && a.perron == b.perron &&
           a.dual_upper == b.dual_upper && a.dual_lower == b.dual_lower && a.gap == b.gap &&
           a.converged == b.converged && a.loop_residual == b.loop_residual &&
           a.shift_covariance_residual == b.shift_covariance_residual &&
           a.induced_mean_max == b.induced_mean_max && a.max_abs_G == b.max_abs_G && a.radii == b.radii &&
           a.profile == b.profile;
  }
};

/// Rate-function curves and diagnostics for one environment.
struct RateReport {
  int dim = 0;
  std::vector<std::vector<double>> thetas;
  std::vector<double> lambdas;
  std::vector<std::vector<double>> velocities;
  std::vector<ExtendedReal> J;
  std::vector<double> J_error;
  double convexity_violation = 0.0;  ///< worst midpoint-convexity defect of the Lambda grid
  double symmetry_violation = 0.0;   ///< max |Lambda(theta) - Lambda(-theta)| on the grid
  std::vector<DualRow> dual;
  friend bool operator==(const RateReport&, const RateReport&) = default;
};

namespace detail {

inline std::string csv_line(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
  return out;
}

inline std::vector<std::string> indexed_header(const std::string& prefix, int d) {
  std::vector<std::string> h;
  for (int i = 1; i <= d; ++i) h.push_back(prefix + "_" + std::to_string(i));
  return h;
}

inline nlohmann::json extended_to_json(const ExtendedReal& v) {
  return v.infinite ? nlohmann::json("inf") : nlohmann::json(v.value);
}

inline ExtendedReal extended_from_json(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return ExtendedReal::infinity();
  return ExtendedReal::finite(j.get<double>());
}

inline ExtendedReal parse_extended(const std::string& s) {
  return s == "inf" ? ExtendedReal::infinity() : ExtendedReal::finite(parse_double(s));
}

}  // namespace detail

/// theta_1..theta_d,lambda
inline std::string lambda_csv(const RateReport& r) {
  auto header = detail::indexed_header("theta", r.dim);
  header.push_back("lambda");
  std::string out = detail::csv_line(header);
  for (std::size_t k = 0; k < r.thetas.size(); ++k) {
    std::vector<std::string> row;
    for (double t : r.thetas[k]) row.push_back(format_double(t));
    row.push_back(format_double(r.lambdas[k]));
    out += detail::csv_line(row);
  }
  return out;
}

/// x_1..x_d,J,error_bound with J = inf for unreachable velocities.
inline std::string j_csv(const RateReport& r) {
  auto header = detail::indexed_header("x", r.dim);
  header.push_back("J");
  header.push_back("error_bound");
  std::string out = detail::csv_line(header);
  for (std::size_t k = 0; k < r.velocities.size(); ++k) {
    std::vector<std::string> row;
    for (double x : r.velocities[k]) row.push_back(format_double(x));
    row.push_back(r.J[k].str());
    row.push_back(format_double(r.J_error[k]));
    out += detail::csv_line(row);
  }
  return out;
}

/// One row per tilt with values and corrector diagnostics.
inline std::string dual_csv(const RateReport& r) {
  auto header = detail::indexed_header("theta", r.dim);
  for (const char* h : {"variational", "perron", "dual_upper", "dual_lower", "gap", "converged", "loop_residual",
                        "shift_covariance_residual", "induced_mean_max", "max_abs_G"})
    header.push_back(h);
  std::string out = detail::csv_line(header);
  for (const auto& d : r.dual) {
    std::vector<std::string> row;
    for (double t : d.theta) row.push_back(format_double(t));
    for (double v : {d.variational, d.perron, d.dual_upper, d.dual_lower, d.gap}) row.push_back(format_double(v));
    row.push_back(d.converged ? "1" : "0");
    for (double v : {d.loop_residual, d.shift_covariance_residual, d.induced_mean_max, d.max_abs_G})
      row.push_back(format_double(v));
    out += detail::csv_line(row);
  }
  return out;
}

/// theta_index,eps,penalized_value,value,gap,iterations,gradient_norm,converged
inline std::string dual_stages_csv(const RateReport& r) {
  std::string out = "theta_index,eps,penalized_value,value,gap,iterations,gradient_norm,converged\n";
  for (std::size_t i = 0; i < r.dual.size(); ++i)
    for (const auto& s : r.dual[i].stages)
      out += detail::csv_line({std::to_string(i), format_double(s.eps), format_double(s.penalized_value),
                               format_double(s.value), s.gap ? format_double(*s.gap) : "", std::to_string(s.iterations),
                               format_double(s.gradient_norm), s.converged ? "1" : "0"});
  return out;
}

/// theta_index,radius,profile
inline std::string profile_csv(const RateReport& r) {
  std::string out = "theta_index,radius,profile\n";
  for (std::size_t i = 0; i < r.dual.size(); ++i)
    for (std::size_t k = 0; k < r.dual[i].radii.size(); ++k)
      out += detail::csv_line({std::to_string(i), std::to_string(r.dual[i].radii[k]), format_double(r.dual[i].profile[k])});
  return out;
}

inline nlohmann::json rate_report_to_json(const RateReport& r) {
  using nlohmann::json;
  json j;
  j["dim"] = r.dim;
  j["theta"] = r.thetas;
  j["lambda"] = r.lambdas;
  j["x"] = r.velocities;
  json jv = json::array();
  for (const auto& v : r.J) jv.push_back(detail::extended_to_json(v));
  j["J"] = jv;
  j["J_error"] = r.J_error;
  j["convexity_violation"] = r.convexity_violation;
  j["symmetry_violation"] = r.symmetry_violation;
  json dual = json::array();
  for (const auto& d : r.dual) {
    json stages = json::array();
    for (const auto& s : d.stages) {
      json js{{"eps", s.eps},
              {"penalized_value", s.penalized_value},
              {"value", s.value},
              {"iterations", s.iterations},
              {"gradient_norm", s.gradient_norm},
              {"converged", s.converged}};
      js["gap"] = s.gap ? json(*s.gap) : json(nullptr);
      stages.push_back(js);
    }
    dual.push_back({{"theta", d.theta},
                    {"variational", d.variational},
                    {"perron", d.perron},
                    {"dual_upper", d.dual_upper},
                    {"dual_lower", d.dual_lower},
                    {"gap", d.gap},
                    {"converged", d.converged},
                    {"loop_residual", d.loop_residual},
                    {"shift_covariance_residual", d.shift_covariance_residual},
                    {"induced_mean_max", d.induced_mean_max},
                    {"max_abs_G", d.max_abs_G},
                    {"radii", d.radii},
                    {"profile", d.profile},
                    {"stages", stages}});
  }
  j["dual"] = dual;
  return j;
}

inline RateReport rate_report_from_json(const nlohmann::json& j) {
  try {
    RateReport r;
    r.dim = j.at("dim").get<int>();
    r.thetas = j.at("theta").get<std::vector<std::vector<double>>>();
    r.lambdas = j.at("lambda").get<std::vector<double>>();
    r.velocities = j.at("x").get<std::vector<std::vector<double>>>();
    for (const auto& v : j.at("J")) r.J.push_back(detail::extended_from_json(v));
    r.J_error = j.at("J_error").get<std::vector<double>>();
    r.convexity_violation = j.at("convexity_violation").get<double>();
    r.symmetry_violation = j.at("symmetry_violation").get<double>();
    for (const auto& jd : j.at("dual")) {
      DualRow d;
      d.theta = jd.at("theta").get<std::vector<double>>();
      d.variational = jd.at("variational").get<double>();
      d.perron = jd.at("perron").get<double>();
      d.dual_upper = jd.at("dual_upper").get<double>();
      d.dual_lower = jd.at("dual_lower").get<double>();
      d.gap = jd.at("gap").get<double>();
      d.converged = jd.at("converged").get<bool>();
      d.loop_residual = jd.at("loop_residual").get<double>();
      d.shift_covariance_residual = jd.at("shift_covariance_residual").get<double>();
      d.induced_mean_max = jd.at("induced_mean_max").get<double>();
      d.max_abs_G = jd.at("max_abs_G").get<double>();
      d.radii = jd.at("radii").get<std::vector<int>>();
      d.profile = jd.at("profile").get<std::vector<double>>();
      for (const auto& js : jd.at("stages")) {
        DualStage s;
        s.eps = js.at("eps").get<double>();
        s.penalized_value = js.at("penalized_value").get<double>();
        s.value = js.at("value").get<double>();
        s.iterations = js.at("iterations").get<std::size_t>();
        s.gradient_norm = js.at("gradient_norm").get<double>();
        s.converged = js.at("converged").get<bool>();
        if (!js.at("gap").is_null()) s.gap = js.at("gap").get<double>();
        d.stages.push_back(s);
      }
      r.dual.push_back(std::move(d));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed rate report: ") + e.what());
  }
}

/// n,tail,direction with direction -1 for the pooled curve.
inline std::string geometry_tails_csv(const GeometryStats& g) {
  std::string out = "n,tail,direction\n";
  for (const auto& c : g.tails)
    for (std::size_t n = 0; n < c.tail.size(); ++n)
      out += detail::csv_line({std::to_string(n), format_double(c.tail[n]), std::to_string(c.direction)});
  return out;
}

/// bin_low,bin_high,count for the chemical-distance ratio histogram.
inline std::string geometry_ratios_csv(const GeometryStats& g) {
  std::string out = "bin_low,bin_high,count\n";
  for (std::size_t i = 0; i < g.ratio_counts.size(); ++i)
    out += detail::csv_line({format_double(g.ratio_edges[i]), format_double(g.ratio_edges[i + 1]),
                             std::to_string(g.ratio_counts[i])});
  return out;
}

inline nlohmann::json geometry_summary_json(const GeometryStats& g) {
  nlohmann::json tails = nlohmann::json::array();
  for (const auto& c : g.tails)
    tails.push_back({{"direction", c.direction},
                     {"observations", c.observations},
                     {"slope", c.slope},
                     {"slope_stderr", c.slope_stderr},
                     {"slope_ci_low", c.slope_ci_low},
                     {"slope_ci_high", c.slope_ci_high},
                     {"fit_first", c.fit_first},
                     {"fit_last", c.fit_last}});
  return {{"pair_count", g.pair_count},
          {"ratio_median", g.ratio_median},
          {"ratio_q90", g.ratio_q90},
          {"rho_hat", g.ratio_q99},
          {"ratio_max", g.ratio_max},
          {"tails", tails}};
}

/// One speed table row; `expected` is set for the full-lattice control.
struct SpeedRow {
  std::string environment;  ///< "cluster" or "full-lattice"
  SpeedResult result;
  std::optional<double> expected;
};

inline std::string speed_csv(const std::vector<SpeedRow>& rows) {
  std::string out = "beta,environment,mean,std_error,ci_low,ci_high,walks,expected\n";
  for (const auto& r : rows)
    out += detail::csv_line({format_double(r.result.beta), r.environment, format_double(r.result.mean),
                             format_double(r.result.std_error), format_double(r.result.ci_low),
                             format_double(r.result.ci_high), std::to_string(r.result.walks),
                             r.expected ? format_double(*r.expected) : ""});
  return out;
}

struct MgfRow {
  std::vector<double> theta;
  McEstimate estimate;
  std::size_t steps = 0;
  double perron = 0.0;
  double exact = 0.0;  ///< exact finite-n value for a uniform start
};

inline std::string mgf_csv(const std::vector<MgfRow>& rows, int dim) {
  auto header = detail::indexed_header("theta", dim);
  for (const char* h : {"estimator", "steps", "walks", "estimate", "std_error", "weight_sum", "effective_samples", "exact", "perron"})
    header.push_back(h);
  std::string out = detail::csv_line(header);
  for (const auto& r : rows) {
    std::vector<std::string> row;
    for (double t : r.theta) row.push_back(format_double(t));
    row.push_back(estimator_name(r.estimate.kind));
    row.push_back(std::to_string(r.steps));
    row.push_back(std::to_string(r.estimate.samples));
    for (double v : {r.estimate.estimate, r.estimate.std_error, r.estimate.weight_sum,
                     r.estimate.effective_samples, r.exact, r.perron})
      row.push_back(format_double(v));
    out += detail::csv_line(row);
  }
  return out;
}

}  // namespace percwalk
