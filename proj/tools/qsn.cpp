// qsn: command-line front end for the generate -> train -> simulate -> validate pipeline.
//
//   qsn generate --recipe unimodal-lag2 --out run/
//   qsn train    --recipe unimodal-lag2 --out run/
//   qsn simulate --recipe unimodal-lag2 --out run/ --set simulate.ensemble=3
//   qsn validate --recipe unimodal-lag2 --out run/
//
// Log verbosity is read from QSN_LOG_LEVEL (quiet | info | debug; default info).

#include "qsn/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>

namespace {

enum class LogLevel { quiet, info, debug };

LogLevel log_level() {
  const char* env = std::getenv("QSN_LOG_LEVEL");
  if (env == nullptr) return LogLevel::info;
  const std::string v(env);
  if (v == "quiet" || v == "0") return LogLevel::quiet;
  if (v == "debug" || v == "2") return LogLevel::debug;
  return LogLevel::info;
}

qsn::Logger make_logger() {
  if (log_level() == LogLevel::quiet) return {};
  const auto start = std::chrono::steady_clock::now();
  return [start](const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "[qsn %8.2fs] %s\n", s, msg.c_str());
  };
}

struct Options {
  std::string config;
  std::string recipe;
  std::vector<std::string> sets;
  std::string out;
  std::string trajectory;
  std::string artifacts;
  std::string reference;
  std::string reduced;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--recipe", o.recipe, "named experiment used as the base configuration");
  cmd->add_option("--set", o.sets, "override a configuration value, e.g. --set l96.h_x=-2")->allow_extra_args(false);
  cmd->add_option("--out", o.out, "output directory")->required();
}

std::string or_default(const std::string& v, const qsn::fs::path& fallback) {
  return v.empty() ? fallback.string() : v;
}

int run(const std::string& stage, const Options& o) {
  const qsn::Logger log = make_logger();
  const qsn::ExperimentConfig cfg = qsn::resolve_config(o.recipe, o.config, o.sets);
  if (log && log_level() == LogLevel::debug) log("resolved config: " + qsn::config_to_json(cfg).dump());
  const qsn::fs::path out(o.out);
  std::error_code ec;
  qsn::fs::create_directories(out, ec);
  if (ec) throw qsn::IoError("cannot create output directory " + out.string() + ": " + ec.message());
  const qsn::ArtifactPaths paths{out};
  const std::string traj = or_default(o.trajectory, paths.trajectory());
  const std::string artifacts = or_default(o.artifacts, out);

  if (stage == "generate" || stage == "run") qsn::cmd_generate(cfg, out, log);
  if (stage == "train" || stage == "run") qsn::cmd_train(cfg, stage == "run" ? paths.trajectory().string() : traj, out, log);
  if (stage == "simulate" || stage == "run")
    qsn::cmd_simulate(cfg, stage == "run" ? out.string() : artifacts, stage == "run" ? paths.trajectory().string() : traj,
                      out, log);
  if (stage == "validate" || stage == "run") {
    const std::string ref = stage == "run" ? paths.trajectory().string() : or_default(o.reference, paths.trajectory());
    const std::string red = stage == "run" ? paths.reduced().string() : or_default(o.reduced, paths.reduced());
    const qsn::fs::path manifest = qsn::ArtifactPaths{artifacts}.train_manifest();
    const int rc = qsn::cmd_validate(cfg, ref, red, out, manifest, log);
    std::cout << (rc == qsn::exit_ok ? "PASS" : "FAIL") << "\n";
    return rc;
  }
  return qsn::exit_ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantized softmax network closure for the two-layer Lorenz 96 system"};
  app.set_version_flag("--version", qsn::tool_version);
  app.require_subcommand(1);

  Options o;
  std::string stage;
  const std::vector<std::pair<std::string, std::string>> stages = {
      {"generate", "integrate the two-layer model and write the reference trajectory"},
      {"train", "fit scaler, bins and network on the first part of a trajectory"},
      {"simulate", "run the reduced model closed by the trained network"},
      {"validate", "compare reference and reduced statistics; exit 1 on failure"},
      {"run", "generate, train, simulate and validate in one go"}};
  for (const auto& [name, help] : stages) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, o);
    if (name == "train" || name == "simulate")
      cmd->add_option("--trajectory", o.trajectory, "reference trajectory CSV (default <out>/trajectory.csv)");
    if (name == "simulate" || name == "validate")
      cmd->add_option("--artifacts", o.artifacts, "directory holding network/scaler/bins (default <out>)");
    if (name == "validate") {
      cmd->add_option("--reference", o.reference, "reference trajectory CSV (default <out>/trajectory.csv)");
      cmd->add_option("--reduced", o.reduced, "reduced trajectory CSV (default <out>/reduced.csv)");
    }
    cmd->callback([&stage, n = name] { stage = n; });
  }
  app.add_subcommand("recipes", "print the named recipes as JSON")->callback([&stage] { stage = "recipes"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? qsn::exit_ok : qsn::exit_usage;
  }

  try {
    if (stage == "recipes") {
      qsn::json all = qsn::json::object();
      for (const auto& [name, j] : qsn::recipes()) all[name] = qsn::config_to_json(qsn::config_from_json(j));
      std::cout << all.dump(2) << "\n";
      return qsn::exit_ok;
    }
    return run(stage, o);
  } catch (const qsn::NumericError& e) {
    std::cerr << "qsn: numeric failure: " << e.what() << "\n";
    return qsn::exit_numeric;
  } catch (const qsn::DegenerateDataError& e) {
    std::cerr << "qsn: degenerate data: " << e.what() << "\n";
    return qsn::exit_numeric;
  } catch (const std::exception& e) {
    std::cerr << "qsn: " << e.what() << "\n";
    return qsn::exit_usage;
  }
}
