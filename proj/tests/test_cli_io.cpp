#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sys/wait.h>

#include "percwalk/config_io.hpp"
#include "percwalk/experiment.hpp"

using namespace percwalk;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("percwalk_cli_io_" + name);
  fs::remove_all(p);
  return p;
}

json base_mc() {
  return json::parse(R"({
    "kind": "mc", "seed": 3, "threads": 1,
    "lattice": {"dim": 2, "side": 8, "boundary": "torus"},
    "model": {"type": "bernoulli-bond", "p": 0.7},
    "mc": {"theta": [[0.5, 0.0]], "steps": 20, "walks": 200, "estimators": ["naive", "tilted"]}
  })");
}

json free_rate(int side, const fs::path& out) {
  json j = json::parse(R"({
    "kind": "rate", "seed": 1,
    "lattice": {"dim": 2, "side": 8},
    "model": {"type": "bernoulli-bond", "p": 1.0},
    "rate": {"theta": {"lo": -1.0, "hi": 1.0, "points": 9}, "velocities": [[0.3, 0.0], [0.0, 0.0], [0.7, 0.6]]}
  })");
  j["lattice"]["side"] = side;
  j["output"] = out.string();
  return j;
}

std::string schema_path_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<accepted>";
}

double free_lambda(const std::vector<double>& t) { return std::log((std::cosh(t[0]) + std::cosh(t[1])) / 2); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PERCWALK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Schema, BaseConfigIsValid) { EXPECT_EQ(schema_path_of(base_mc()), "<accepted>"); }

TEST(Schema, RejectsMutationsWithFieldPaths) {
  struct Mutation {
    std::string expected_path;
    std::function<void(json&)> apply;
  };
  const std::vector<Mutation> mutations = {
      {"/kind", [](json& j) { j.erase("kind"); }},
      {"/kind", [](json& j) { j["kind"] = 5; }},
      {"/kind", [](json& j) { j["kind"] = "walk"; }},
      {"/seed", [](json& j) { j.erase("seed"); }},
      {"/seed", [](json& j) { j["seed"] = -1; }},
      {"/seed", [](json& j) { j["seed"] = "3"; }},
      {"/threads", [](json& j) { j["threads"] = 0; }},
      {"/output", [](json& j) { j["output"] = ""; }},
      {"/lattice", [](json& j) { j.erase("lattice"); }},
      {"/lattice/dim", [](json& j) { j["lattice"]["dim"] = 0; }},
      {"/lattice/side", [](json& j) { j["lattice"]["side"] = "8"; }},
      {"/lattice/boundary", [](json& j) { j["lattice"]["boundary"] = "sphere"; }},
      {"/lattice/shape", [](json& j) { j["lattice"]["shape"] = "cube"; }},
      {"/model/type", [](json& j) { j["model"]["type"] = "ising"; }},
      {"/model/p", [](json& j) { j["model"]["p"] = 1.5; }},
      {"/model/p", [](json& j) { j["model"].erase("p"); }},
      {"/model/q", [](json& j) { j["model"]["type"] = "random-cluster"; }},
      {"/mc/theta/0", [](json& j) { j["mc"]["theta"] = json::parse("[[0.5]]"); }},
      {"/mc/walks", [](json& j) { j["mc"]["walks"] = 10; }},
      {"/mc/estimators/0", [](json& j) { j["mc"]["estimators"] = json::parse(R"(["fancy"])"); }},
      {"/speed", [](json& j) { j["speed"] = json::parse(R"({"betas": [2.0]})"); }},
      {"/verbose", [](json& j) { j["verbose"] = true; }},
  };
  ASSERT_GE(mutations.size(), 20u);
  for (const auto& m : mutations) {
    json j = base_mc();
    m.apply(j);
    EXPECT_EQ(schema_path_of(j), m.expected_path) << j.dump();
  }
}

TEST(Schema, MalformedTextIsRootError) {
  try {
    config_from_text("{\"kind\": ");
    FAIL() << "accepted malformed JSON";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.path(), "");
  }
}

TEST(Schema, DualScheduleMustDecrease) {
  json j = base_mc();
  j["kind"] = "dual";
  j.erase("mc");
  j["dual"] = json::parse(R"({"theta": [[0.5, 0.0]], "schedule": [0.1, 0.1]})");
  EXPECT_EQ(schema_path_of(j), "/dual/schedule/1");
}

TEST(Schema, CanonicalRoundTrip) {
  for (const char* text : {
           R"({"kind":"sample","seed":9,"lattice":{"dim":3,"side":6,"boundary":"dirichlet"},"model":{"type":"gff-level-set","h":0.25},"sample":{"count":2}})",
           R"({"kind":"rate","seed":2,"lattice":{"dim":2,"side":8},"model":{"type":"random-cluster","p":0.6,"q":2,"sweeps":30},"rate":{"theta":{"lo":-2,"hi":2,"points":5},"velocities":[[0.1,0.2]],"refine":true}})",
           R"({"kind":"speed","seed":18446744073709551615,"output":"x/y","lattice":{"dim":2,"side":8},"model":{"type":"bernoulli-site","p":0.8},"speed":{"betas":[1.5,10],"steps":100,"walks":100,"control":false}})",
           R"({"kind":"geometry","seed":0,"lattice":{"dim":2,"side":8},"model":{"type":"bernoulli-bond","p":0.7},"geometry":{"samples":2,"pairs":500,"fit_floor":4}})"}) {
    const auto c = config_from_text(text);
    EXPECT_EQ(config_from_json(config_to_json(c)), c) << text;
    EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
  }
  EXPECT_EQ(config_from_json(base_mc()), config_from_json(config_to_json(config_from_json(base_mc()))));
}

TEST(Schema, FlagsOverrideAndDefaultRoot) {
  json j = base_mc();
  auto c = config_from_json(j);
  ::setenv(kOutputRootVariable, "/tmp/pw_root", 1);
  EXPECT_EQ(resolve_output_dir(c), fs::path("/tmp/pw_root/mc-3"));
  ::unsetenv(kOutputRootVariable);
  EXPECT_EQ(resolve_output_dir(c), fs::path("runs/mc-3"));
  c.output = "elsewhere";
  EXPECT_EQ(resolve_output_dir(c), fs::path("elsewhere"));
}

TEST(Runner, SampleAllOpenWritesOneOpenConfiguration) {
  const auto dir = scratch("sample_open");
  json j = base_mc();
  j["kind"] = "sample";
  j.erase("mc");
  j["model"]["p"] = 1.0;
  j["output"] = dir.string();
  const auto m = run_experiment(config_from_json(j));
  std::size_t configs = 0;
  for (const auto& f : m.files)
    if (f.path.rfind("configuration_", 0) == 0) ++configs;
  EXPECT_EQ(configs, 1u);
  const auto c = read_configuration((dir / "configuration_0000.pwcf").string());
  EXPECT_EQ(c.open_count(), c.lattice().edge_count());
  EXPECT_EQ(c.lattice().side(), 8);
  EXPECT_NO_THROW(verify_manifest(load_manifest(dir)));
  EXPECT_FALSE(fs::exists(dir.string() + ".partial"));
  fs::remove_all(dir);
}

TEST(Runner, RerunsAreByteIdentical) {
  const auto dir = scratch("rerun");
  json j = base_mc();
  j["output"] = dir.string();
  const auto config = config_from_json(j);
  const auto a = run_experiment(config);
  const auto first_mgf = read_file(dir / "mgf.csv");
  const auto b = run_experiment(config);
  ASSERT_EQ(a.files.size(), b.files.size());
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    EXPECT_EQ(a.files[i].path, b.files[i].path);
    EXPECT_EQ(a.files[i].sha256, b.files[i].sha256) << a.files[i].path;
    EXPECT_EQ(a.files[i].bytes, b.files[i].bytes);
  }
  EXPECT_EQ(read_file(dir / "mgf.csv"), first_mgf);
  fs::remove_all(dir);
}

TEST(Runner, ThreadCountDoesNotChangeOutputs) {
  const auto d1 = scratch("threads1"), d4 = scratch("threads4");
  json j = base_mc();
  j["output"] = d1.string();
  run_experiment(config_from_json(j));
  j["output"] = d4.string();
  j["threads"] = 4;
  run_experiment(config_from_json(j));
  EXPECT_EQ(read_file(d1 / "mgf.csv"), read_file(d4 / "mgf.csv"));
  fs::remove_all(d1);
  fs::remove_all(d4);
}

TEST(Runner, FreeWalkRateMatchesClosedForm) {
  const auto dir = scratch("free_rate");
  const auto m = run_experiment(config_from_json(free_rate(8, dir)));
  const auto rows = parse_csv(read_file(dir / "lambda.csv"));
  ASSERT_EQ(rows.size(), 82u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"theta_1", "theta_2", "lambda"}));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::vector<double> t{parse_double(rows[r][0]), parse_double(rows[r][1])};
    EXPECT_NEAR(std::remainder(t[0], 0.25), 0.0, 1e-15);
    EXPECT_NEAR(parse_double(rows[r][2]), free_lambda(t), 1e-10);
  }
  const auto report = rate_report_from_json(json::parse(read_file(dir / "rate.json")));
  ASSERT_EQ(report.J.size(), 3u);
  EXPECT_FALSE(report.J[0].infinite);
  EXPECT_LE(report.J[1].value, 1e-8);
  EXPECT_TRUE(report.J[2].infinite);
  fs::remove_all(dir);
}

TEST(Runner, PipelineErrorCleansUp) {
  const auto dir = scratch("pipeline_error");
  json j = free_rate(8, dir);
  j["model"]["p"] = 0.0;
  try {
    run_experiment(config_from_json(j));
    FAIL() << "empty environment accepted";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "label");
  }
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_FALSE(fs::exists(dir.string() + ".partial"));
}

TEST(RoundTrip, RateOutputsMatchInMemory) {
  const auto dir = scratch("rate_roundtrip");
  json j = free_rate(10, dir);
  j["model"]["p"] = 0.75;
  j["rate"]["theta"]["points"] = 5;
  j["rate"]["velocities"] = json::parse("[[0.02, 0.0], [0.0, 0.0], [0.7, 0.6]]");
  const auto config = config_from_json(j);
  run_experiment(config);
  const auto env = detail::sample_environment(config, 0);
  const EnvironmentChain chain(env.config, env.labeling);
  const auto expected = detail::rate_curves(chain, config);

  EXPECT_EQ(rate_report_from_json(json::parse(read_file(dir / "rate.json"))), expected);
  const auto lam = parse_csv(read_file(dir / "lambda.csv"));
  ASSERT_EQ(lam.size(), expected.lambdas.size() + 1);
  for (std::size_t k = 0; k < expected.lambdas.size(); ++k) {
    EXPECT_EQ(parse_double(lam[k + 1][0]), expected.thetas[k][0]);
    EXPECT_EQ(parse_double(lam[k + 1][1]), expected.thetas[k][1]);
    EXPECT_EQ(parse_double(lam[k + 1][2]), expected.lambdas[k]);
  }
  const auto jt = parse_csv(read_file(dir / "J.csv"));
  ASSERT_EQ(jt.size(), expected.J.size() + 1);
  for (std::size_t k = 0; k < expected.J.size(); ++k) {
    EXPECT_EQ(detail::parse_extended(jt[k + 1][2]), expected.J[k]);
    EXPECT_EQ(parse_double(jt[k + 1][3]), expected.J_error[k]);
  }
  fs::remove_all(dir);
}

TEST(RoundTrip, DualReportMatchesInMemory) {
  const auto dir = scratch("dual_roundtrip");
  json j = base_mc();
  j["kind"] = "dual";
  j.erase("mc");
  j["lattice"]["side"] = 6;
  j["dual"] = json::parse(R"({"theta": [[0.5, 0.0]], "schedule": [0.1, 0.01], "radii": [1, 2]})");
  j["output"] = dir.string();
  const auto config = config_from_json(j);
  run_experiment(config);
  const auto env = detail::sample_environment(config, 0);
  const EnvironmentChain chain(env.config, env.labeling);
  const auto row = detail::dual_row(chain, env.labeling, config, config.thetas[0]);
  const auto report = rate_report_from_json(json::parse(read_file(dir / "rate.json")));
  ASSERT_EQ(report.dual.size(), 1u);
  EXPECT_EQ(report.dual[0], row);
  const auto csv = parse_csv(read_file(dir / "dual_stages.csv"));
  EXPECT_EQ(csv.size(), row.stages.size() + 1);
  fs::remove_all(dir);
}

TEST(RoundTrip, ConfigurationFileBitExact) {
  const auto dir = scratch("configuration_roundtrip");
  json j = base_mc();
  j["kind"] = "sample";
  j.erase("mc");
  j["output"] = dir.string();
  const auto config = config_from_json(j);
  run_experiment(config);
  const auto env = detail::sample_environment(config, 0);
  const auto bytes = encode_configuration(env.config);
  EXPECT_EQ(read_file(dir / "configuration_0000.pwcf"), std::string(bytes.begin(), bytes.end()));
  fs::remove_all(dir);
}

TEST(Report, EmptyListGivesEmptySummary) {
  const auto dir = scratch("report_empty");
  const auto files = emit_report({}, dir);
  EXPECT_EQ(files, std::vector<std::string>{"summary.json"});
  const auto summary = json::parse(read_file(dir / "summary.json"));
  EXPECT_TRUE(summary.at("runs").empty());
  fs::remove_all(dir);
}

TEST(Report, OneRateRunHasExactlyItsTables) {
  const auto run = scratch("report_one_run"), out = scratch("report_one_out");
  run_experiment(config_from_json(free_rate(8, run)));
  emit_report({load_manifest(run)}, out);
  const auto summary = json::parse(read_file(out / "summary.json"));
  ASSERT_EQ(summary.at("runs").size(), 1u);
  const auto& r = summary["runs"][0];
  EXPECT_EQ(r.at("lambda").size(), 81u);
  EXPECT_EQ(r.at("J").size(), 3u);
  EXPECT_FALSE(r.contains("mgf"));
  const auto lam = parse_csv(read_file(run / "lambda.csv"));
  for (std::size_t k = 0; k < 81; ++k) {
    EXPECT_EQ(r["lambda"][k]["lambda"].get<double>(), parse_double(lam[k + 1][2]));
    EXPECT_EQ(r["lambda"][k]["theta_1"].get<double>(), parse_double(lam[k + 1][0]));
  }
  EXPECT_EQ(r["J"][2]["J"], "inf");
  EXPECT_TRUE(fs::exists(out / "lambda_d2.csv"));
  EXPECT_TRUE(fs::exists(out / "J_d2.csv"));
  const auto script = read_file(out / "plot.gp");
  EXPECT_NE(script.find("'lambda_d2.csv'"), std::string::npos);
  fs::remove_all(run);
  fs::remove_all(out);
}

TEST(Report, FreeWalkCurvesIndependentOfSide) {
  const auto r8 = scratch("report_L8"), r16 = scratch("report_L16"), out = scratch("report_L_out");
  run_experiment(config_from_json(free_rate(8, r8)));
  run_experiment(config_from_json(free_rate(16, r16)));
  emit_report({load_manifest(r8), load_manifest(r16)}, out);
  const auto rows = parse_csv(read_file(out / "lambda_d2.csv"));
  ASSERT_EQ(rows.size(), 1 + 2 * 81u);
  EXPECT_EQ(rows[0][0], "run");
  EXPECT_EQ(rows[0][1], "side");
  for (std::size_t k = 1; k <= 81; ++k) {
    EXPECT_EQ(rows[k][1], "8");
    EXPECT_EQ(rows[k + 81][1], "16");
    EXPECT_EQ(rows[k][3], rows[k + 81][3]);
    EXPECT_EQ(rows[k][4], rows[k + 81][4]);
    EXPECT_NEAR(parse_double(rows[k][5]), parse_double(rows[k + 81][5]), 1e-14);
  }
  fs::remove_all(r8);
  fs::remove_all(r16);
  fs::remove_all(out);
}

TEST(Report, MissingOrAlteredArtifact) {
  EXPECT_THROW(load_manifest(scratch("no_such_run")), MissingArtifact);
  const auto run = scratch("report_missing"), out = scratch("report_missing_out");
  run_experiment(config_from_json(free_rate(8, run)));
  auto m = load_manifest(run);
  write_file(run / "J.csv", "x_1,x_2,J,error_bound\n");
  EXPECT_THROW(emit_report({m}, out), MissingArtifact);
  fs::remove(run / "J.csv");
  EXPECT_THROW(emit_report({m}, out), MissingArtifact);
  EXPECT_FALSE(fs::exists(out));
  fs::remove_all(run);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const auto good = dir / "good.json";
  write_file(good, free_rate(8, dir / "run").dump());
  EXPECT_EQ(run_cli("rate --config " + good.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "manifest.json"));
  EXPECT_EQ(run_cli("rate --config " + good.string() + " --seed 5 --threads 2 --out " + (dir / "run5").string()), 0);
  EXPECT_EQ(json::parse(read_file(dir / "run5" / "config.json")).at("seed"), 5);
  EXPECT_EQ(run_cli("report --out " + (dir / "report").string() + " " + (dir / "run").string()), 0);

  EXPECT_EQ(run_cli("mc --config " + good.string()), 2);
  EXPECT_EQ(run_cli("rate"), 2);
  EXPECT_EQ(run_cli("rate --config " + (dir / "absent.json").string()), 2);
  EXPECT_EQ(run_cli("rate --config " + good.string() + " --seed -4"), 2);
  auto bad = free_rate(8, dir / "bad_run");
  bad["model"]["p"] = 2.0;
  write_file(dir / "bad.json", bad.dump());
  EXPECT_EQ(run_cli("rate --config " + (dir / "bad.json").string()), 2);
  write_file(dir / "broken.json", "{");
  EXPECT_EQ(run_cli("rate --config " + (dir / "broken.json").string()), 2);

  auto empty = free_rate(8, dir / "empty_run");
  empty["model"]["p"] = 0.0;
  write_file(dir / "empty.json", empty.dump());
  EXPECT_EQ(run_cli("rate --config " + (dir / "empty.json").string()), 3);
  EXPECT_FALSE(fs::exists(dir / "empty_run.partial"));
  EXPECT_EQ(run_cli("report --out " + (dir / "report2").string() + " " + (dir / "nothing").string()), 3);
  fs::remove_all(dir);
}
