#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "percwalk/experiment.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitPipeline = 3;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
};

percwalk::ExperimentConfig load(const RunFlags& flags, percwalk::ExperimentKind kind) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(percwalk::read_file(flags.config));
  } catch (const nlohmann::json::parse_error& e) {
    throw percwalk::SchemaError("", std::string("malformed JSON: ") + e.what());
  } catch (const percwalk::Error& e) {
    throw percwalk::SchemaError("", e.what());
  }
  if (!j.is_object()) throw percwalk::SchemaError("", "expected an object");
  const std::string name(percwalk::kind_name(kind));
  if (!j.contains("kind")) j["kind"] = name;
  else if (j["kind"] != name) throw percwalk::SchemaError("/kind", "config kind does not match subcommand '" + name + "'");
  if (flags.seed) j["seed"] = *flags.seed;
  if (flags.out) j["output"] = *flags.out;
  if (flags.threads) j["threads"] = *flags.threads;
  return percwalk::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Percolation random-walk experiments"};
  app.set_version_flag("--version", std::string(percwalk::kToolVersion));
  app.require_subcommand(1);
  std::cout.precision(17);

  RunFlags flags;
  std::optional<percwalk::ExperimentKind> chosen;
  for (int i = 0; i <= 5; ++i) {
    const auto kind = static_cast<percwalk::ExperimentKind>(i);
    auto* sub = app.add_subcommand(std::string(percwalk::kind_name(kind)),
                                   "Run a " + std::string(percwalk::kind_name(kind)) + " experiment");
    sub->add_option("--config", flags.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Override the master seed");
    sub->add_option("--out", flags.out, "Override the run directory");
    sub->add_option("--threads", flags.threads, "Override the worker count")->check(CLI::Range(1u, 1024u));
    sub->callback([&chosen, kind] { chosen = kind; });
  }
  std::string report_out;
  std::vector<std::string> run_dirs;
  auto* report = app.add_subcommand("report", "Merge finished runs into a report directory");
  report->add_option("--out", report_out, "Report directory")->required();
  report->add_option("runs", run_dirs, "Run directories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (report->parsed()) {
      std::vector<percwalk::RunManifest> manifests;
      for (const auto& dir : run_dirs) manifests.push_back(percwalk::load_manifest(dir));
      for (const auto& file : percwalk::emit_report(manifests, report_out))
        std::cout << (std::filesystem::path(report_out) / file).string() << '\n';
      return 0;
    }
    const auto config = load(flags, *chosen);
    const auto manifest = percwalk::run_experiment(config);
    std::cout << (std::filesystem::path(manifest.directory) / "manifest.json").string() << '\n';
    return 0;
  } catch (const percwalk::SchemaError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "pipeline error: " << e.what() << '\n';
    return kExitPipeline;
  }
}
