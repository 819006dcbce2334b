#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

using namespace qsn;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qsn_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json small_config_json() { return config_to_json(fixture::small_config()); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QSN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig d;
  const ExperimentConfig back = config_from_json(config_to_json(d));
  EXPECT_EQ(config_to_json(back), config_to_json(d));
  EXPECT_EQ(back.train.iterations, 10000);
  EXPECT_EQ(back.bins, 10);
  EXPECT_EQ(back.simulate.timing, FeatureTiming::post_update);
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  EXPECT_THROW(config_from_json(json{{"l96", {{"hx", -2}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"colour", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"bins", 1}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"l96", {{"N", "many"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"simulate", {{"mode", "greedy"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"features", {{"x_lags", {3, 1}}}}}), ConfigError);
}

TEST(Config, SetOverrides) {
  json j = json::object();
  apply_override(j, "l96.h_x=-2");
  apply_override(j, "features.x_lags=[0,1,2]");
  apply_override(j, "simulate.mode=deterministic");
  apply_override(j, "name=my run");
  const ExperimentConfig c = config_from_json(j);
  EXPECT_DOUBLE_EQ(c.l96.h_x, -2.0);
  EXPECT_EQ(c.features.x_lags, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(c.simulate.mode, SamplerMode::deterministic);
  EXPECT_EQ(c.name, "my run");
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(j, "name.sub=1"), ConfigError);
}

TEST(Config, SeedStreamsAreDistinct) {
  ExperimentConfig c;
  const std::set<std::uint64_t> s{c.data_seed(), c.init_seed(), c.train_seed(), c.simulate_seed(0), c.simulate_seed(1)};
  EXPECT_EQ(s.size(), 5u);
  EXPECT_EQ(config_from_json(json::object()).train.seed, c.train_seed());
}

TEST(Recipes, AllExperimentsPresent) {
  const std::vector<std::string> names{"unimodal-lag2", "bimodal-lag10", "bimodal-lag75", "local-stochastic",
                                       "local-deterministic"};
  EXPECT_EQ(recipes().size(), names.size());
  for (const auto& n : names) EXPECT_NO_THROW(resolve_config(n, "", {})) << n;
  EXPECT_THROW(resolve_config("nope", "", {}), ConfigError);

  const auto uni = resolve_config("unimodal-lag2", "", {});
  EXPECT_EQ(uni.features.x_lags, (std::vector<int>{0, 9}));
  EXPECT_DOUBLE_EQ(uni.l96.h_x, -1.0);
  const auto b10 = resolve_config("bimodal-lag10", "", {});
  EXPECT_DOUBLE_EQ(b10.l96.h_x, -2.0);
  EXPECT_EQ(b10.features.x_lags.size(), 10u);
  const auto b75 = resolve_config("bimodal-lag75", "", {});
  EXPECT_EQ(b75.features.feature_dim(18), 75 * 18);
  const auto ls = resolve_config("local-stochastic", "", {});
  const auto ld = resolve_config("local-deterministic", "", {});
  EXPECT_EQ(ls.features.locality, Locality::local);
  EXPECT_EQ(ls.simulate.mode, SamplerMode::stochastic);
  EXPECT_EQ(ld.simulate.mode, SamplerMode::deterministic);
  EXPECT_EQ(ls.features, ld.features);
}

TEST(Recipes, OverridesApplyOnTopOfRecipeAndFile) {
  const fs::path dir = scratch_dir("cfg");
  write_json(dir / "c.json", json{{"seed", 5}, {"l96", {{"F", 8.0}}}});
  const auto c = resolve_config("bimodal-lag10", (dir / "c.json").string(), {"seed=9"});
  EXPECT_DOUBLE_EQ(c.l96.h_x, -2.0);
  EXPECT_DOUBLE_EQ(c.l96.F, 8.0);
  EXPECT_EQ(c.seed, 9u);
  fs::remove_all(dir);
}

TEST(Pipeline, GenerateRowsBytesAndManifest) {
  const fs::path a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  ExperimentConfig cfg = fixture::small_config();
  cfg.l96.h_x = -2.0;
  cmd_generate(cfg, a);
  cmd_generate(cfg, b);
  const Trajectory t = read_trajectory_csv(ArtifactPaths{a}.trajectory());
  EXPECT_EQ(t.rows(), 2001);
  EXPECT_EQ(read_text(ArtifactPaths{a}.trajectory()), read_text(ArtifactPaths{b}.trajectory()));
  const json m = read_json(ArtifactPaths{a}.trajectory_manifest());
  EXPECT_DOUBLE_EQ(m["l96"]["h_x"].get<double>(), -2.0);
  EXPECT_EQ(m["tool_version"], tool_version);
  EXPECT_EQ(m["trajectory_hash"], content_hash(read_text(ArtifactPaths{a}.trajectory())));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, HalfLengthUnimodalTrajectoryHas50001Rows) {
  const fs::path dir = scratch_dir("gen_half");
  ExperimentConfig cfg = resolve_config("unimodal-lag2", "", {"trajectory.t_end=500"});
  cmd_generate(cfg, dir);
  const std::string csv = read_text(ArtifactPaths{dir}.trajectory());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 50001 + 1);
  fs::remove_all(dir);
}

TEST(Pipeline, TrainSimulateValidateRoundTrip) {
  const fs::path dir = scratch_dir("pipe"), again = scratch_dir("pipe2");
  ExperimentConfig cfg = fixture::small_config();
  cfg.ensemble = 2;
  cmd_generate(cfg, dir);
  cmd_train(cfg, ArtifactPaths{dir}.trajectory(), dir);
  cmd_train(cfg, ArtifactPaths{dir}.trajectory(), again);

  const std::string loss = read_text(ArtifactPaths{dir}.loss_history());
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), cfg.train.iterations + 1);
  EXPECT_EQ(read_text(ArtifactPaths{dir}.network()), read_text(ArtifactPaths{again}.network()));
  const json tm = read_json(ArtifactPaths{dir}.train_manifest());
  EXPECT_EQ(tm["misclassification"].size(), 8u);

  cmd_simulate(cfg, dir, ArtifactPaths{dir}.trajectory(), dir);
  cmd_simulate(cfg, dir, ArtifactPaths{dir}.trajectory(), again);
  EXPECT_EQ(read_text(ArtifactPaths{dir}.reduced(0)), read_text(ArtifactPaths{again}.reduced(0)));
  EXPECT_EQ(read_text(ArtifactPaths{dir}.reduced(1)), read_text(ArtifactPaths{again}.reduced(1)));
  EXPECT_NE(read_text(ArtifactPaths{dir}.reduced(0)), read_text(ArtifactPaths{dir}.reduced(1)));
  const json rm = read_json(ArtifactPaths{dir}.reduced_manifest());
  EXPECT_EQ(rm["feature_hash"], tm["feature_hash"]);
  EXPECT_EQ(rm["members"].size(), 2u);

  // reference against itself: every distance zero, exit 0
  const int self = cmd_validate(cfg, ArtifactPaths{dir}.trajectory(), ArtifactPaths{dir}.trajectory(), again);
  EXPECT_EQ(self, exit_ok);
  const json rep = read_json(ArtifactPaths{again}.stats_report());
  EXPECT_EQ(rep["comparison"]["hellinger_pdf_X"].get<double>(), 0.0);
  EXPECT_EQ(rep["comparison"]["rel_l2_acf_X"].get<double>(), 0.0);
  for (const char* f : {"pdf_X.csv", "pdf_r.csv", "acf_X.csv", "acf_r.csv", "ccf_X.csv", "ccf_r.csv"})
    EXPECT_TRUE(fs::exists(again / f)) << f;

  const int rc = cmd_validate(cfg, ArtifactPaths{dir}.trajectory(), ArtifactPaths{dir}.reduced(), dir,
                              ArtifactPaths{dir}.train_manifest());
  EXPECT_TRUE(rc == exit_ok || rc == exit_validation_failed);
  EXPECT_EQ(read_json(ArtifactPaths{dir}.stats_report())["surrogate"]["misclassification"].size(), 8u);
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST(Pipeline, ValidationFailureExitCode) {
  const fs::path dir = scratch_dir("vfail");
  ExperimentConfig cfg = fixture::small_config();
  cmd_generate(cfg, dir);
  Trajectory t = read_trajectory_csv(ArtifactPaths{dir}.trajectory());
  t.X.array() += 5.0;
  write_trajectory_csv(dir / "shifted.csv", t);
  EXPECT_EQ(cmd_validate(cfg, ArtifactPaths{dir}.trajectory(), dir / "shifted.csv", dir), exit_validation_failed);
  fs::remove_all(dir);
}

TEST(Pipeline, HashMismatchIsConfigError) {
  const fs::path dir = scratch_dir("hash");
  ExperimentConfig cfg = fixture::small_config();
  cmd_generate(cfg, dir);
  cmd_train(cfg, ArtifactPaths{dir}.trajectory(), dir);
  ExperimentConfig other = cfg;
  other.features.x_lags = {0, 4};
  EXPECT_THROW(cmd_simulate(other, dir, ArtifactPaths{dir}.trajectory(), dir), ConfigError);

  // scaler from a different training run
  ExperimentConfig reseeded = cfg;
  reseeded.seed = 99;
  const fs::path alt = scratch_dir("hash_alt");
  cmd_generate(reseeded, alt);
  cmd_train(reseeded, ArtifactPaths{alt}.trajectory(), alt);
  fs::copy_file(ArtifactPaths{alt}.scaler(), ArtifactPaths{dir}.scaler(), fs::copy_options::overwrite_existing);
  try {
    cmd_simulate(cfg, dir, ArtifactPaths{dir}.trajectory(), dir);
    FAIL() << "expected hash mismatch";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("hash mismatch"), std::string::npos);
  }
  fs::remove_all(dir);
  fs::remove_all(alt);
}

TEST(Pipeline, MissingInputsAreIoErrors) {
  ExperimentConfig cfg = fixture::small_config();
  EXPECT_THROW(cmd_train(cfg, "/nonexistent/trajectory.csv", fs::temp_directory_path()), IoError);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch_dir("cli");
  write_json(dir / "small.json", small_config_json());
  const std::string base = "--config " + (dir / "small.json").string() + " --out " + dir.string();
  EXPECT_EQ(run_cli("recipes"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("generate " + base + " --set l96.hx=-2"), 2);
  EXPECT_EQ(run_cli("train " + base + " --trajectory /nonexistent.csv"), 2);
  EXPECT_EQ(run_cli("generate " + base + " --set l96.dt=2.0 --set simulate.t_end=10"), 3);
  EXPECT_EQ(run_cli("generate " + base), 0);
  EXPECT_EQ(run_cli("train " + base), 0);
  EXPECT_EQ(run_cli("simulate " + base), 0);
  const int v = run_cli("validate " + base);
  EXPECT_TRUE(v == 0 || v == 1);
  EXPECT_EQ(run_cli("simulate " + base + " --set features.x_lags=[0,1]"), 2);
  EXPECT_TRUE(fs::exists(dir / "stats_report.json"));
  fs::remove_all(dir);
}
