// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "percwalk/corrector.hpp"
#include "percwalk/dual.hpp"
#include "percwalk/experiment.hpp"
#include "percwalk/legendre.hpp"
#include "percwalk/montecarlo.hpp"
#include "percwalk/variational.hpp"

using namespace percwalk;

namespace {

// Pinned tolerances and budgets.
constexpr double kFreeWalkTol = 1e-10;
constexpr double kFreeWalkSeconds = 5;
constexpr double kDvTol = 1e-6;
constexpr double kDvSeconds = 60;
constexpr double kDualGapTol = 1e-4;
constexpr double kSandwichSlack = 1e-6;
constexpr double kLoopTol = 1e-9;
constexpr double kShiftTol = 1e-9;
constexpr double kInducedTol = 1e-10;
constexpr double kDualLargeSeconds = 600;
constexpr double kTvTol = 0.01;
constexpr double kFkSeconds = 300;
constexpr double kRatioBound = 4.0;
constexpr double kMcSigmas = 3.0;
constexpr double kMcSeconds = 600;
constexpr double kControlSigmas = 3.0;
constexpr double kJZeroTol = 1e-8;
constexpr double kJOracleTol = 1e-6;
constexpr int kInstances = 20;
constexpr int kInstanceSide = 16;
constexpr double kP = 0.7;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Instance {
  Configuration config;
  ClusterLabeling labeling;
  EnvironmentChain chain;
  explicit Instance(Configuration c) : config(std::move(c)), labeling(label_clusters(config)), chain(config, labeling) {}
};

Instance bernoulli_instance(int dim, int side, double p, std::uint64_t seed) {
  return Instance(sample_bernoulli(Lattice(dim, side), p, seed, PercolationKind::bond));
}

Instance free_instance(int side) { return Instance(Configuration::all_open(Lattice(2, side), PercolationKind::bond)); }

double free_lambda(const std::vector<double>& t) { return std::log((std::cosh(t[0]) + std::cosh(t[1])) / 2); }

const std::vector<std::vector<double>> kAxisTilts = {{0.5, 0.0}, {-0.5, 0.0}, {0.0, 0.5}, {0.0, -0.5}};

/// The 20 shared supercritical instances, built once.
const std::vector<Instance>& instances() {
  static const std::vector<Instance> all = [] {
    std::vector<Instance> v;
    for (int i = 0; i < kInstances; ++i) v.push_back(bernoulli_instance(2, kInstanceSide, kP, 1000 + i));
    return v;
  }();
  return all;
}

struct Result {
  bool pass = true;
  std::string detail;
};

// Worst dual-solver G diagnostics over every solve, shared by criteria 3 and 4.
struct GradientDiagnostics {
  double loop = 0.0;
  double shift = 0.0;
  double induced = 0.0;
  std::size_t solves = 0;
  void add(const CorrectorDiagnostics& d) {
    loop = std::max(loop, d.loop_residual);
    shift = std::max(shift, d.shift_covariance_residual);
    induced = std::max(induced, d.induced_mean_max);
    ++solves;
  }
};
GradientDiagnostics g_diagnostics;

Result free_walk_oracle() {
  const auto t0 = Clock::now();
  const auto inst = free_instance(8);
  double worst = 0.0;
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      const std::vector<double> t{-1.0 + 0.25 * i, -1.0 + 0.25 * j};
      worst = std::max(worst, std::abs(log_mgf_perron(inst.chain, t).log_root - free_lambda(t)));
    }
  const double s = seconds_since(t0);
  return {worst <= kFreeWalkTol && s < kFreeWalkSeconds,
          "L=8 9x9 grid, max |Lambda - closed form| = " + fmt(worst) + ", " + fmt(s) + " s"};
}

Result donsker_varadhan() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const auto& inst : instances())
    for (const auto& t : kAxisTilts) {
      const auto var = variational_sup(inst.chain, linear_function(inst.chain, t));
      worst = std::max(worst, std::abs(var.value - log_mgf_perron(inst.chain, t).log_root));
    }
  const double s = seconds_since(t0);
  return {worst <= kDvTol && s < kDvSeconds,
          "20 instances L=16 p=0.7, max |variational - Perron| = " + fmt(worst) + ", " + fmt(s) + " s"};
}

Result bound_equivalence() {
  double worst_gap = 0.0, worst_low = 0.0, worst_high = 0.0;
  bool sandwich = true;
  for (const auto& inst : instances())
    for (const auto& t : kAxisTilts) {
      const auto f = linear_function(inst.chain, t);
      const double var = variational_sup(inst.chain, f).value;
      const auto dual = dual_penalized_solver(inst.chain, f);
      const double lambda_G = upper_bound_Lambda(inst.chain, f, dual.G);
      worst_gap = std::max(worst_gap, dual.value - var);
      worst_low = std::max(worst_low, var - dual.value);
      worst_high = std::max(worst_high, dual.value - lambda_G);
      sandwich = sandwich && var <= dual.value && dual.value <= lambda_G + kSandwichSlack;
      g_diagnostics.add(corrector_eval(inst.chain, dual.G, inst.labeling));
    }
  return {sandwich && worst_gap <= kDualGapTol,
          "max gap = " + fmt(worst_gap) + ", max (variational - dual) = " + fmt(worst_low) +
              ", max (dual - Lambda(f,G)) = " + fmt(worst_high)};
}

Result gradient_diagnostics() {
  const auto t0 = Clock::now();
  const auto inst = bernoulli_instance(2, 256, kP, 4242);
  const auto f = linear_function(inst.chain, {0.5, 0.0});
  // At this size Newton stages below eps = 1e-4 do not converge within the
  // iteration cap, so the schedule stops there.
  DualOptions dual_opts;
  dual_opts.schedule = {1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001, 3e-4, 1e-4};
  const auto dual = dual_penalized_solver(inst.chain, f, dual_opts);
  CorrectorOptions opts;
  opts.seed = 4243;
  const auto diag = corrector_eval(inst.chain, dual.G, inst.labeling, opts);
  g_diagnostics.add(diag);
  const auto profile = sublinearity_profile(inst.chain, diag.V, {16, 128}, 0);
  const double s = seconds_since(t0);
  const bool pass = g_diagnostics.loop <= kLoopTol && g_diagnostics.shift <= kShiftTol &&
                    g_diagnostics.induced <= kInducedTol && profile[1] < profile[0] && s < kDualLargeSeconds;
  return {pass, std::to_string(g_diagnostics.solves) + " solves, loop " + fmt(g_diagnostics.loop) + ", shift " +
                    fmt(g_diagnostics.shift) + ", induced mean " + fmt(g_diagnostics.induced) +
                    "; L=256 dual to eps 1e-4 (converged: " + (dual.converged ? "yes" : "no") +
                    "), profile(16) = " + fmt(profile[0]) + ", profile(128) = " + fmt(profile[1]) + ", " +
                    fmt(s) + " s"};
}

Result random_cluster() {
  const auto t0 = Clock::now();
  const Lattice lat(2, 3);
  const auto exact = oracle::random_cluster_law(lat, 0.5, 2.0);
  const std::size_t edges = lat.edge_count();
  RandomClusterChain chain(lat, 0.5, 2.0, 77);
  for (int s = 0; s < 1000; ++s) chain.sweep();
  std::uint64_t mask = 0;
  for (std::size_t e = 0; e < edges; ++e)
    if (chain.bits()[e]) mask |= std::uint64_t{1} << e;
  // Rao-Blackwellized occupation frequencies: each heat-bath update credits
  // both completions of the resampled edge with their conditional weights.
  constexpr std::uint64_t kUpdates = 1'000'000'000;
  std::vector<double> freq(exact.size(), 0.0);
  for (std::uint64_t k = 0; k < kUpdates; ++k) {
    const EdgeIndex e = k % edges;
    const double prob = chain.update(e);
    const std::uint64_t rest = mask & ~(std::uint64_t{1} << e);
    freq[rest | (std::uint64_t{1} << e)] += prob;
    freq[rest] += 1.0 - prob;
    mask = chain.bits()[e] ? rest | (std::uint64_t{1} << e) : rest;
  }
  double tv = 0.0;
  for (std::size_t m = 0; m < exact.size(); ++m) tv += std::abs(freq[m] / static_cast<double>(kUpdates) - exact[m]);
  tv /= 2;

  // q = 1: every heat-bath probability is exactly p in every visited state.
  RandomClusterChain bernoulli(lat, 0.37, 1.0, 78);
  bool q_one_exact = true;
  for (int s = 0; s < 2000; ++s)
    for (EdgeIndex e = 0; e < edges; ++e) q_one_exact = q_one_exact && bernoulli.update(e) == 0.37;
  const double s = seconds_since(t0);
  return {tv <= kTvTol && q_one_exact && s < kFkSeconds,
          "3x3 q=2 p=0.5, 1e9 updates, TV = " + fmt(tv) + "; q=1 probabilities exactly p: " +
              (q_one_exact ? "yes" : "no") + ", " + fmt(s) + " s"};
}

Result geometry_tails() {
  std::vector<Instance> envs;
  for (int i = 0; i < 20; ++i) envs.push_back(bernoulli_instance(2, 256, kP, 6000 + i));
  std::vector<LabeledConfiguration> labeled;
  for (const auto& e : envs) labeled.push_back({&e.config, &e.labeling});
  const auto stats = geometry_tail_stats(labeled, 20000, 6100, 10);
  const auto& pooled = stats.tails.back();
  const bool pass = pooled.direction == -1 && pooled.slope < 0 && pooled.slope_ci_high < 0 &&
                    stats.ratio_q99 < kRatioBound;
  return {pass, "slope " + fmt(pooled.slope) + " CI [" + fmt(pooled.slope_ci_low) + ", " + fmt(pooled.slope_ci_high) +
                    "], rho_hat = q99 of d_ch/|x-y|_1 = " + fmt(stats.ratio_q99)};
}

Result monte_carlo() {
  const auto t0 = Clock::now();
  const auto inst = bernoulli_instance(2, 128, kP, 7);
  const std::vector<double> theta{0.5, 0.0};
  const auto tilted = mc_log_mgf(inst.chain, theta, 500, 100000, 71, true);
  const auto naive = mc_log_mgf(inst.chain, theta, 500, 100000, 72, false);
  const double perron = log_mgf_perron(inst.chain, theta).log_root;
  const double exact = exact_log_mgf(inst.chain, theta, 500);
  const double z = (tilted.estimate - perron) / tilted.std_error;
  const double z_exact = (tilted.estimate - exact) / tilted.std_error;
  const double s = seconds_since(t0);
  const bool pass = std::abs(z) <= kMcSigmas && tilted.std_error < naive.std_error && s < kMcSeconds;
  return {pass, "tilted " + fmt(tilted.estimate) + " +- " + fmt(tilted.std_error) + ", Perron " + fmt(perron) +
                    " (z = " + fmt(z) + "); exact n=500 value " + fmt(exact) + " (z = " + fmt(z_exact) +
                    "); naive SE " + fmt(naive.std_error) + ", " + fmt(s) + " s"};
}

Result zero_speed() {
  const auto env = bernoulli_instance(2, 512, 0.55, 8);
  const auto graph = std::make_shared<const ClusterGraph>(env.config, env.labeling);
  const std::vector<double> betas{1.5, 10.0};
  const auto r = speed_experiment(graph, betas, 100000, 200, 81);
  const auto full = Configuration::all_open(Lattice(2, 512), PercolationKind::bond);
  const auto full_graph = std::make_shared<const ClusterGraph>(full, label_clusters(full));
  const auto control = speed_experiment(full_graph, betas, 100000, 200, 82);
  bool control_ok = true;
  std::string control_text;
  for (const auto& c : control) {
    const double expected = (c.beta - 1) / (c.beta + 3);
    control_ok = control_ok && std::abs(c.mean - expected) <= kControlSigmas * c.std_error;
    control_text += " beta " + fmt(c.beta) + ": " + fmt(c.mean) + " vs " + fmt(expected) + ";";
  }
  const bool pass = r[1].mean < r[0].mean && r[0].mean > 0 && r[1].mean > 0 && r[1].ci_high < r[0].ci_low && control_ok;
  return {pass, "speed(1.5) = " + fmt(r[0].mean) + " [" + fmt(r[0].ci_low) + ", " + fmt(r[0].ci_high) + "], speed(10) = " +
                    fmt(r[1].mean) + " [" + fmt(r[1].ci_low) + ", " + fmt(r[1].ci_high) + "]; control" + control_text};
}

Result level_one() {
  double worst_zero = 0.0;
  bool infinite_ok = true;
  const std::vector<std::vector<double>> far = {{0.7, 0.6}, {1.01, 0.0}, {-0.5, -0.6}, {0.0, -1.2}};
  const auto perron_of = [](const Instance& inst) {
    return [&inst](const std::vector<double>& t) { return log_mgf_perron(inst.chain, t).log_root; };
  };
  for (const auto& inst : instances()) {
    const auto grid = LambdaGrid::build(2, -1.0, 1.0, 11, perron_of(inst));
    const auto j = legendre_level1(grid, {0.0, 0.0});
    worst_zero = std::max(worst_zero, j.value.is_finite() ? j.value.value : INFINITY);
    for (const auto& x : far) infinite_ok = infinite_ok && legendre_level1(grid, x).value.infinite;
  }
  const auto free = free_instance(8);
  const auto fn = perron_of(free);
  const auto grid = LambdaGrid::build(2, -3.0, 3.0, 31, fn);
  for (const auto& x : far) infinite_ok = infinite_ok && legendre_level1(grid, x).value.infinite;
  const double oracle_value =
      oracle::golden_max([](double t) { return 0.3 * t - free_lambda({t, 0.0}); }, -5.0, 5.0);
  const auto j = legendre_refined(grid, fn, {0.3, 0.0});
  const double err = std::abs(j.value.value - oracle_value);
  return {worst_zero <= kJZeroTol && infinite_ok && err <= kJOracleTol,
          "max J(0) = " + fmt(worst_zero) + " over 20 instances; |x|_1 > 1 infinite: " + (infinite_ok ? "yes" : "no") +
              "; free J(0.3,0) error " + fmt(err)};
}

Result invariant_suites() {
  std::vector<std::string> failed;
  const auto check = [&](bool ok, const char* name) {
    if (!ok) failed.push_back(name);
  };
  const auto& inst = instances()[0];
  const auto& chain = inst.chain;

  // Entropy convexity along the segment from the walk's pair measure to the tilted optimizer.
  const auto mu0 = measure_from_pair(srw_pair(chain), chain);
  const auto mu1 = variational_sup(chain, linear_function(chain, {0.5, 0.0})).mu;
  EdgeTable mid = mu0;
  for (std::size_t k = 0; k < mid.values.size(); ++k) mid.values[k] = 0.5 * (mu0.values[k] + mu1.values[k]);
  const auto i0 = entropy_level2(mu0, chain), i1 = entropy_level2(mu1, chain), im = entropy_level2(mid, chain);
  check(i0.is_finite() && i1.is_finite() && im.is_finite() &&
            im.value <= 0.5 * (i0.value + i1.value) + 1e-12 && std::abs(i0.value) <= 1e-12,
        "entropy convexity");

  // Lambda midpoint convexity and symmetry on every shared instance.
  for (const auto& in : instances()) {
    const auto grid = LambdaGrid::build(2, -1.0, 1.0, 9, [&](const std::vector<double>& t) {
      return log_mgf_perron(in.chain, t).log_root;
    });
    check(grid.convexity_violation() <= 1e-12, "Lambda convexity");
    double asym = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      auto idx = grid.multi_index(k);
      for (int& i : idx) i = grid.points - 1 - i;
      asym = std::max(asym, std::abs(grid.values[k] - grid.values[grid.flat(idx)]));
    }
    check(asym <= 1e-10, "Lambda symmetry");
  }

  // psi(lambda)/lambda for walk displacements.
  const TransitionKernel srw(inst.config, inst.labeling, kernel_mode::Srw{});
  const auto giant = inst.labeling.giant_sites();
  std::vector<double> displacement;
  for (std::uint64_t w = 0; w < 500; ++w)
    displacement.push_back(
        static_cast<double>(simulate_walk(srw, giant[w % giant.size()], 50, 900 + w).displacement(2)[0]));
  const std::vector<double> lambdas{0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
  check(psi_monotonicity_check(displacement, lambdas).monotone, "psi monotonicity");

  // Pair empirical measures: marginal gap <= 2/n, CSV round trip, path round trip.
  for (std::size_t n : {1u, 10u, 1000u}) {
    const auto path = simulate_walk(srw, giant[0], n, 950 + n);
    const auto mu = pair_empirical_measure(path, inst.config.lattice());
    check(measure_marginals(mu, inst.config.lattice()).gap <= 2.0 / static_cast<double>(n) + 1e-15, "marginal gap");
    const auto back = measure_from_csv(measure_to_csv(mu));
    check(back.atoms == mu.atoms, "measure CSV round trip");
    check(decode_path(encode_path(path, inst.config.lattice()), inst.config.lattice()) == path, "path round trip");
  }

  // Kernel support is exactly the set of open directions.
  const auto& k = chain.srw();
  for (std::size_t s = 0; s < chain.size(); ++s) {
    double row = 0.0;
    for (int dir = 0; dir < chain.dirs(); ++dir) {
      const double w = k(static_cast<State>(s), dir);
      check((w > 0.0) == chain.open(s, dir), "kernel support");
      row += w;
    }
    check(std::abs(row - 1.0) <= 1e-15, "kernel rows");
  }

  // Binary configuration and JSON report round trips.
  check(decode_configuration(encode_configuration(inst.config)) == inst.config, "configuration round trip");
  check(configuration_from_json(configuration_to_json(inst.config)) == inst.config, "configuration JSON round trip");

  // Deterministic reruns through the full pipeline.
  const fs::path dir = fs::temp_directory_path() / "percwalk_acceptance_rerun";
  ExperimentConfig c;
  c.kind = ExperimentKind::rate;
  c.seed = 10;
  c.side = 12;
  c.model.p = kP;
  c.velocities = {{0.0, 0.0}, {0.05, 0.0}, {0.6, 0.6}};
  c.output = dir.string();
  const auto first = run_experiment(c);
  const auto report = rate_report_from_json(nlohmann::json::parse(read_file(dir / "rate.json")));
  const auto env = detail::sample_environment(c, 0);
  check(report == detail::rate_curves(EnvironmentChain(env.config, env.labeling), c), "rate JSON round trip");
  const auto second = run_experiment(c);
  check(first.files == second.files, "byte-identical reruns");
  fs::remove_all(dir);

  std::string detail = "entropy convexity, Lambda convexity and symmetry, psi monotonicity, marginal gap, kernel "
                       "support, round trips, reruns";
  if (!failed.empty()) {
    std::set<std::string> unique(failed.begin(), failed.end());
    detail = "failed:";
    for (const auto& f : unique) detail += " " + f + ";";
  }
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("criteria", only, "Criteria to run (default all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<int, std::function<Result()>>> criteria = {
      {1, free_walk_oracle},   {2, donsker_varadhan}, {3, bound_equivalence}, {4, gradient_diagnostics},
      {5, random_cluster},     {6, geometry_tails},   {7, monte_carlo},       {8, zero_speed},
      {9, level_one},          {10, invariant_suites}};
  bool all = true;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Result r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    all = all && r.pass;
    std::printf("criterion %2d: %s  %s  [%.1f s]\n", id, r.pass ? "PASS" : "FAIL", r.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
