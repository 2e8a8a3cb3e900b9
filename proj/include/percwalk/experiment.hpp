#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "percwalk/config_io.hpp"
#include "percwalk/corrector.hpp"
#include "percwalk/dual.hpp"
#include "percwalk/experiment_config.hpp"
#include "percwalk/legendre.hpp"
#include "percwalk/models.hpp"
#include "percwalk/perron.hpp"
#include "percwalk/report.hpp"
#include "percwalk/variational.hpp"

#ifndef PERCWALK_VERSION
#define PERCWALK_VERSION "unknown"
#endif

namespace percwalk {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = PERCWALK_VERSION;
inline constexpr const char* kOutputRootVariable = "PERCWALK_OUT";

struct ArtifactRecord {
  std::string path;    ///< relative to the run directory
  std::string sha256;  ///< lowercase hex
  std::uintmax_t bytes = 0;
  friend bool operator==(const ArtifactRecord&, const ArtifactRecord&) = default;
};

struct RunManifest {
  std::string directory;
  nlohmann::json config;
  std::string version;
  std::string started;   ///< UTC, ISO 8601
  std::string finished;
  std::vector<ArtifactRecord> files;
};

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int size = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &size, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < size; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Per-purpose child seed of the master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) { return Rng(master).split(stream).seed(); }

inline constexpr std::uint64_t kEnvironmentStream = 0;           ///< + sample index
inline constexpr std::uint64_t kPairStream = 1ull << 32;
inline constexpr std::uint64_t kWalkStream = 2ull << 32;         ///< + row index

/// Run directory: config.output, else $PERCWALK_OUT/<kind>-<seed>, else runs/<kind>-<seed>.
inline fs::path resolve_output_dir(const ExperimentConfig& c) {
  if (!c.output.empty()) return c.output;
  const char* root = std::getenv(kOutputRootVariable);
  const fs::path base = (root && *root) ? fs::path(root) : fs::path("runs");
  return base / (std::string(kind_name(c.kind)) + "-" + std::to_string(c.seed));
}

namespace detail {

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Collects output files in a staging directory.
class Staging {
 public:
  explicit Staging(fs::path dir) : dir_(std::move(dir)) {}
  void write(const std::string& name, const std::string& bytes) {
    write_file(dir_ / name, bytes);
    files_.push_back({name, sha256_hex(bytes), bytes.size()});
  }
  const std::vector<ArtifactRecord>& files() const noexcept { return files_; }

 private:
  fs::path dir_;
  std::vector<ArtifactRecord> files_;
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

struct Environment {
  Configuration config;
  ClusterLabeling labeling;
};

inline Environment sample_environment(const ExperimentConfig& c, std::size_t index) {
  ModelParams params = c.model;
  params.seed = derive_seed(c.seed, kEnvironmentStream + index);
  auto config = stage("sample", [&] { return sample_model(c.lattice(), params); });
  auto labeling = stage("label", [&] { return label_clusters(config); });
  // A walk needs at least one open step, so a giant cluster of one site is unusable.
  if (labeling.giant_size() < 2) throw PipelineError("label", "environment has no open edge in its giant cluster");
  return {std::move(config), std::move(labeling)};
}

inline std::string sample_table(const std::vector<std::uint64_t>& seeds, const std::vector<Environment>& envs) {
  std::string out = "index,seed,open_fraction,giant_size,components\n";
  for (std::size_t i = 0; i < envs.size(); ++i)
    out += csv_line({std::to_string(i), std::to_string(seeds[i]), format_double(envs[i].config.open_fraction()),
                     std::to_string(envs[i].labeling.giant_size()), std::to_string(envs[i].labeling.component_count())});
  return out;
}

inline std::string padded(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

inline void run_sample(const ExperimentConfig& c, Staging& out) {
  std::vector<Environment> envs;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < c.count; ++i) {
    envs.push_back(sample_environment(c, i));
    seeds.push_back(derive_seed(c.seed, kEnvironmentStream + i));
    const auto bytes = encode_configuration(envs.back().config);
    out.write("configuration_" + padded(i) + ".pwcf", std::string(bytes.begin(), bytes.end()));
  }
  out.write("samples.csv", sample_table(seeds, envs));
}

inline void run_geometry(const ExperimentConfig& c, Staging& out) {
  std::vector<Environment> envs;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < c.samples; ++i) {
    envs.push_back(sample_environment(c, i));
    seeds.push_back(derive_seed(c.seed, kEnvironmentStream + i));
  }
  std::vector<LabeledConfiguration> labeled;
  for (const auto& e : envs) labeled.push_back({&e.config, &e.labeling});
  const auto stats = stage("analyze", [&] {
    return geometry_tail_stats(labeled, c.pairs, derive_seed(c.seed, kPairStream), c.fit_floor);
  });
  out.write("samples.csv", sample_table(seeds, envs));
  out.write("geometry_tails.csv", geometry_tails_csv(stats));
  out.write("geometry_ratios.csv", geometry_ratios_csv(stats));
  out.write("geometry.json", dump(geometry_summary_json(stats)));
}

inline RateReport rate_curves(const EnvironmentChain& chain, const ExperimentConfig& c) {
  RateReport report;
  report.dim = c.dim;
  const auto lambda = [&](const std::vector<double>& t) {
    const auto r = log_mgf_perron(chain, t);
    if (!r.converged) throw PipelineError("perron", "Perron iteration did not converge");
    return r.log_root;
  };
  const auto grid = stage("perron", [&] { return LambdaGrid::build(c.dim, c.grid.lo, c.grid.hi, c.grid.points, lambda); });
  for (std::size_t k = 0; k < grid.size(); ++k) {
    report.thetas.push_back(grid.theta(k));
    report.lambdas.push_back(grid.values[k]);
    auto idx = grid.multi_index(k);
    for (int& i : idx) i = grid.points - 1 - i;
    report.symmetry_violation = std::max(report.symmetry_violation, std::abs(grid.values[k] - grid.values[grid.flat(idx)]));
  }
  report.convexity_violation = grid.convexity_violation();
  for (const auto& x : c.velocities) {
    const auto j = stage("legendre", [&] { return c.refine ? legendre_refined(grid, lambda, x) : legendre_level1(grid, x); });
    report.velocities.push_back(x);
    report.J.push_back(j.value);
    report.J_error.push_back(j.error_bound);
  }
  return report;
}

inline void run_rate(const ExperimentConfig& c, Staging& out) {
  const auto env = sample_environment(c, 0);
  const EnvironmentChain chain(env.config, env.labeling);
  const auto report = rate_curves(chain, c);
  out.write("lambda.csv", lambda_csv(report));
  out.write("J.csv", j_csv(report));
  out.write("rate.json", dump(rate_report_to_json(report)));
}

inline DualRow dual_row(const EnvironmentChain& chain, const ClusterLabeling& labeling, const ExperimentConfig& c,
                        const std::vector<double>& theta) {
  DualRow row;
  row.theta = theta;
  const auto f = linear_function(chain, theta);
  const auto var = stage("variational", [&] { return variational_sup(chain, f); });
  row.variational = var.value;
  row.perron = stage("perron", [&] { return log_mgf_perron(chain, theta).log_root; });
  DualOptions opts;
  if (!c.schedule.empty()) opts.schedule = c.schedule;
  opts.reference = var.value;
  const auto dual = stage("dual", [&] { return dual_penalized_solver(chain, f, opts); });
  row.dual_upper = dual.value;
  row.dual_lower = dual.penalized_value;
  row.gap = dual.value - var.value;
  row.converged = dual.converged && var.converged;
  row.stages = dual.stages;
  CorrectorOptions copts;
  copts.seed = derive_seed(c.seed, kPairStream);
  const auto diag = stage("corrector", [&] { return corrector_eval(chain, dual.G, labeling, copts); });
  row.loop_residual = diag.loop_residual;
  row.shift_covariance_residual = diag.shift_covariance_residual;
  row.induced_mean_max = diag.induced_mean_max;
  row.max_abs_G = diag.max_abs_G;
  row.radii = c.radii;
  if (!c.radii.empty()) row.profile = sublinearity_profile(chain, diag.V, c.radii, 0);
  return row;
}

inline void run_dual(const ExperimentConfig& c, Staging& out) {
  const auto env = sample_environment(c, 0);
  const EnvironmentChain chain(env.config, env.labeling);
  RateReport report;
  report.dim = c.dim;
  for (const auto& theta : c.thetas) report.dual.push_back(dual_row(chain, env.labeling, c, theta));
  out.write("dual.csv", dual_csv(report));
  out.write("dual_stages.csv", dual_stages_csv(report));
  out.write("profile.csv", profile_csv(report));
  out.write("rate.json", dump(rate_report_to_json(report)));
}

inline void run_mc(const ExperimentConfig& c, Staging& out) {
  const auto env = sample_environment(c, 0);
  const EnvironmentChain chain(env.config, env.labeling);
  McOptions opts;
  opts.threads = c.threads;
  std::vector<MgfRow> rows;
  for (std::size_t t = 0; t < c.thetas.size(); ++t) {
    const double perron = stage("perron", [&] { return log_mgf_perron(chain, c.thetas[t]).log_root; });
    const double exact = stage("exact", [&] { return exact_log_mgf(chain, c.thetas[t], c.steps); });
    for (auto kind : c.estimators) {
      MgfRow row;
      row.theta = c.thetas[t];
      row.steps = c.steps;
      row.perron = perron;
      row.exact = exact;
      row.estimate = stage("mc", [&] {
        return mc_log_mgf(chain, c.thetas[t], c.steps, c.walks, derive_seed(c.seed, kWalkStream + t),
                          kind == EstimatorKind::tilted, opts);
      });
      rows.push_back(std::move(row));
    }
  }
  out.write("mgf.csv", mgf_csv(rows, c.dim));
}

inline void run_speed(const ExperimentConfig& c, Staging& out) {
  const auto env = sample_environment(c, 0);
  const auto graph = std::make_shared<const ClusterGraph>(env.config, env.labeling);
  const std::uint64_t seed = derive_seed(c.seed, kWalkStream);
  std::vector<SpeedRow> rows;
  for (const auto& r : stage("speed", [&] { return speed_experiment(graph, c.betas, c.steps, c.walks, seed, c.threads); }))
    rows.push_back({"cluster", r, std::nullopt});
  if (c.control) {
    const Lattice torus(c.dim, c.side);
    const auto full = Configuration::all_open(torus, PercolationKind::bond);
    const auto full_graph = std::make_shared<const ClusterGraph>(full, label_clusters(full));
    for (const auto& r : stage("speed", [&] { return speed_experiment(full_graph, c.betas, c.steps, c.walks, seed, c.threads); }))
      rows.push_back({"full-lattice", r, (r.beta - 1) / (r.beta + 2 * c.dim - 1)});
  }
  out.write("speed.csv", speed_csv(rows));
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : m.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"tool", "percwalk"}, {"version", m.version}, {"config", m.config},
          {"started", m.started}, {"finished", m.finished}, {"files", files}};
}

}  // namespace detail

/// Read <dir>/manifest.json.
inline RunManifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw MissingArtifact(path.string() + " does not exist");
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    RunManifest m;
    m.directory = dir.string();
    m.config = j.at("config");
    m.version = j.at("version").get<std::string>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    for (const auto& f : j.at("files"))
      m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(), f.at("bytes").get<std::uintmax_t>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MissingArtifact(path.string() + " is malformed: " + e.what());
  }
}

/// Throws MissingArtifact for the first listed file that is absent or whose hash differs.
inline void verify_manifest(const RunManifest& m) {
  for (const auto& f : m.files) {
    const fs::path path = fs::path(m.directory) / f.path;
    if (!fs::exists(path)) throw MissingArtifact(path.string() + " does not exist");
    if (sha256_hex(read_file(path)) != f.sha256) throw MissingArtifact(path.string() + " does not match its hash");
  }
}

/// Execute one experiment: sample, label, analyze, emit. Outputs are staged in
/// a sibling directory and renamed into place on success; on failure the
/// staging directory is removed. Everything except manifest.json is
/// byte-identical across reruns of the same config on the same build.
inline RunManifest run_experiment(const ExperimentConfig& config) {
  const fs::path dir = resolve_output_dir(config);
  const fs::path partial = fs::path(dir.string() + ".partial");
  RunManifest manifest;
  manifest.config = config_to_json(config);
  manifest.version = kToolVersion;
  manifest.started = utc_timestamp();
  try {
    detail::stage("emit", [&] {
      fs::remove_all(partial);
      fs::create_directories(partial);
    });
    detail::Staging out(partial);
    detail::stage("emit", [&] {
      out.write("config.json", detail::dump(manifest.config));
      out.write("provenance.json", detail::dump({{"seed", config.seed},
                                                 {"version", manifest.version},
                                                 {"kind", std::string(kind_name(config.kind))},
                                                 {"params", manifest.config}}));
    });
    switch (config.kind) {
      case ExperimentKind::sample: detail::run_sample(config, out); break;
      case ExperimentKind::geometry: detail::run_geometry(config, out); break;
      case ExperimentKind::rate: detail::run_rate(config, out); break;
      case ExperimentKind::dual: detail::run_dual(config, out); break;
      case ExperimentKind::mc: detail::run_mc(config, out); break;
      case ExperimentKind::speed: detail::run_speed(config, out); break;
    }
    manifest.files = out.files();
    manifest.finished = utc_timestamp();
    detail::stage("emit", [&] {
      write_file(partial / "manifest.json", detail::dump(detail::manifest_to_json(manifest)));
      fs::remove_all(dir);
      if (dir.has_parent_path()) fs::create_directories(dir.parent_path());
      fs::rename(partial, dir);
    });
  } catch (...) {
    std::error_code ignored;
    fs::remove_all(partial, ignored);
    throw;
  }
  manifest.directory = dir.string();
  return manifest;
}

namespace detail {

inline std::vector<std::vector<std::string>> read_table(const RunManifest& m, const std::string& name) {
  const auto rows = parse_csv(read_file(fs::path(m.directory) / name));
  if (rows.empty()) throw MissingArtifact(m.directory + "/" + name + " has no header");
  return rows;
}

inline bool lists(const RunManifest& m, const std::string& name) {
  for (const auto& f : m.files)
    if (f.path == name) return true;
  return false;
}

inline std::string model_parameter(const nlohmann::json& config) {
  const auto& m = config.at("model");
  for (const char* key : {"p", "u", "h"})
    if (m.contains(key)) return format_double(m.at(key).get<double>());
  return "";
}

/// Prefixes each data row of a run table with run metadata.
class MergedTable {
 public:
  void add(std::size_t run, const RunManifest& m, const std::vector<std::vector<std::string>>& rows) {
    if (header_.empty()) {
      header_ = {"run", "side", "param"};
      header_.insert(header_.end(), rows[0].begin(), rows[0].end());
    } else if (!std::equal(rows[0].begin(), rows[0].end(), header_.begin() + 3, header_.end())) {
      throw PipelineError("report", "runs disagree on the columns of a merged table");
    }
    const std::string side = std::to_string(m.config.at("lattice").at("side").get<int>());
    const std::string param = model_parameter(m.config);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      std::vector<std::string> row{std::to_string(run), side, param};
      row.insert(row.end(), rows[r].begin(), rows[r].end());
      body_ += csv_line(row);
    }
  }
  bool empty() const noexcept { return header_.empty(); }
  std::string text() const { return csv_line(header_) + body_; }
  std::size_t column(const std::string& name) const {
    return static_cast<std::size_t>(std::find(header_.begin(), header_.end(), name) - header_.begin()) + 1;
  }

 private:
  std::vector<std::string> header_;
  std::string body_;
};

inline nlohmann::json table_json(const std::vector<std::vector<std::string>>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t c = 0; c < rows[0].size() && c < rows[r].size(); ++c) {
      const auto& cell = rows[r][c];
      if (cell.empty()) row[rows[0][c]] = nullptr;
      else if (cell == "inf") row[rows[0][c]] = "inf";
      else {
        try {
          row[rows[0][c]] = parse_double(cell);
        } catch (const InvalidArgument&) {
          row[rows[0][c]] = cell;
        }
      }
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace detail

/// Merge runs into summary.json, per-quantity CSVs and a gnuplot script in
/// `out_dir`. Each manifest is verified first; an absent or altered output
/// raises MissingArtifact. Merged CSVs and the script are written only for
/// quantities present in at least one run.
inline std::vector<std::string> emit_report(const std::vector<RunManifest>& manifests, const fs::path& out_dir) {
  for (const auto& m : manifests) verify_manifest(m);
  std::map<std::string, detail::MergedTable> merged;
  static const std::vector<std::pair<std::string, std::string>> tables = {
      {"lambda.csv", "lambda"}, {"J.csv", "J"},       {"dual.csv", "dual"},   {"profile.csv", "profile"},
      {"mgf.csv", "mgf"},       {"speed.csv", "speed"}, {"geometry_tails.csv", "tails"}};
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    const auto& m = manifests[i];
    nlohmann::json run{{"run", i}, {"directory", m.directory}, {"version", m.version}, {"config", m.config}};
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : m.files) files.push_back(f.path);
    run["files"] = files;
    for (const auto& [file, key] : tables) {
      if (!detail::lists(m, file)) continue;
      const auto rows = detail::read_table(m, file);
      std::string merged_name = key;
      if (key == "lambda" || key == "J" || key == "dual" || key == "mgf")
        merged_name += "_d" + std::to_string(m.config.at("lattice").at("dim").get<int>());
      merged[merged_name].add(i, m, rows);
      run[key] = detail::table_json(rows);
    }
    runs.push_back(run);
  }

  const fs::path partial = fs::path(out_dir.string() + ".partial");
  std::vector<std::string> written;
  try {
    fs::remove_all(partial);
    fs::create_directories(partial);
    write_file(partial / "summary.json", detail::dump({{"tool", "percwalk"}, {"version", kToolVersion}, {"runs", runs}}));
    written.push_back("summary.json");
    std::string script;
    for (const auto& [name, table] : merged) {
      const std::string file = name + ".csv";
      write_file(partial / file, table.text());
      written.push_back(file);
      std::string x, y;
      if (name.rfind("lambda", 0) == 0) { x = "theta_1"; y = "lambda"; }
      else if (name.rfind("J", 0) == 0) { x = "x_1"; y = "J"; }
      else if (name == "tails") { x = "n"; y = "tail"; }
      else if (name == "speed") { x = "beta"; y = "mean"; }
      else if (name == "profile") { x = "radius"; y = "profile"; }
      else continue;
      script += "set title '" + y + " vs " + x + "'\n";
      if (name == "tails") script += "set logscale y\n";
      script += "plot '" + file + "' using " + std::to_string(table.column(x)) + ":" + std::to_string(table.column(y)) +
                " with points title '" + name + "'\n";
      if (name == "tails") script += "unset logscale y\n";
    }
    if (!script.empty()) {
      write_file(partial / "plot.gp", "set datafile separator ','\nset key autotitle columnhead\n" + script);
      written.push_back("plot.gp");
    }
    fs::remove_all(out_dir);
    if (out_dir.has_parent_path()) fs::create_directories(out_dir.parent_path());
    fs::rename(partial, out_dir);
  } catch (const std::exception& e) {
    std::error_code ignored;
    fs::remove_all(partial, ignored);
    throw PipelineError("report", e.what());
  }
  return written;
}

}  // namespace percwalk
