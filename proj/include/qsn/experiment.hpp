#pragma once

// Experiment configuration, named recipes, and the four pipeline stages
// (generate, train, simulate, validate) with their on-disk artifacts.

#include "qsn/common.hpp"
#include "qsn/features.hpp"
#include "qsn/io.hpp"
#include "qsn/l96.hpp"
#include "qsn/network.hpp"
#include "qsn/reduced.hpp"
#include "qsn/resampler.hpp"
#include "qsn/rng.hpp"
#include "qsn/statistics.hpp"

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qsn {

inline constexpr const char* tool_version = "qsn 1.0.0";

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_validation_failed = 1, exit_usage = 2, exit_numeric = 3 };

struct ExperimentConfig {
  std::string name = "custom";
  std::uint64_t seed = 1;
  L96Params l96;
  double t_end = 1000.0;
  double burn_in = 10.0;
  FeatureSpec features;
  int bins = 10;
  BinMethod bin_method = BinMethod::quantile;
  std::vector<int> hidden{256, 256, 256};
  double leaky_slope = 0.01;
  TrainConfig train;
  double train_fraction = 0.5;
  ReducedRunConfig simulate;
  int ensemble = 1;
  StatsOptions stats;
  Thresholds thresholds;

  // Named streams split off the root seed.
  std::uint64_t data_seed() const { return stream_seed(seed, "data"); }
  std::uint64_t init_seed() const { return stream_seed(seed, "init"); }
  std::uint64_t train_seed() const { return stream_seed(seed, "train"); }
  std::uint64_t simulate_seed(int member) const {
    return stream_seed(seed, "simulate", static_cast<std::uint64_t>(member));
  }

  void validate() const {
    l96.validate();
    features.validate();
    if (!(t_end > 0.0)) throw ConfigError("config: trajectory.t_end must be > 0");
    if (burn_in < 0.0) throw ConfigError("config: trajectory.burn_in must be >= 0");
    if (bins < 2) throw ConfigError("config: bins must be >= 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("config: train.train_fraction must be in (0, 1)");
    if (ensemble < 1) throw ConfigError("config: simulate.ensemble must be >= 1");
    train.validate();
    simulate.validate();
    if (std::abs(simulate.dt - l96.dt) > 1e-12 * l96.dt) throw ConfigError("config: simulate dt must equal l96.dt");
  }
};

inline json config_to_json(const ExperimentConfig& c) {
  json train = c.train;
  train.erase("seed");
  train["train_fraction"] = c.train_fraction;
  return json{{"name", c.name},
              {"seed", c.seed},
              {"l96", c.l96},
              {"trajectory", {{"t_end", c.t_end}, {"burn_in", c.burn_in}}},
              {"features", c.features},
              {"bins", c.bins},
              {"bin_method", to_string(c.bin_method)},
              {"network", {{"hidden", c.hidden}, {"leaky_slope", c.leaky_slope}}},
              {"train", train},
              {"simulate",
               {{"t_start", c.simulate.t_start},
                {"t_end", c.simulate.t_end},
                {"mode", to_string(c.simulate.mode)},
                {"timing", to_string(c.simulate.timing)},
                {"ensemble", c.ensemble}}},
              {"validate",
               {{"max_lag_time", c.stats.max_lag_time},
                {"pdf_points", c.stats.pdf_points},
                {"hellinger_max", c.thresholds.hellinger_max},
                {"acf_l2_max", c.thresholds.acf_l2_max},
                {"ccf_l2_max", c.thresholds.ccf_l2_max}}}};
}

namespace detail {

/// Rejects keys the default configuration does not have (typos would
/// otherwise be silently ignored).
inline void check_known_keys(const json& user, const json& known, const std::string& path) {
  if (!user.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!known.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
    if (known[it.key()].is_object()) check_known_keys(it.value(), known[it.key()], key);
  }
}

} // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  detail::check_known_keys(j, config_to_json(ExperimentConfig{}), "");
  try {
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    if (j.contains("l96")) c.l96 = j.at("l96").get<L96Params>();
    if (j.contains("trajectory")) {
      c.t_end = j["trajectory"].value("t_end", c.t_end);
      c.burn_in = j["trajectory"].value("burn_in", c.burn_in);
    }
    if (j.contains("features")) c.features = j.at("features").get<FeatureSpec>();
    c.bins = j.value("bins", c.bins);
    c.bin_method = bin_method_from_string(j.value("bin_method", to_string(c.bin_method)));
    if (j.contains("network")) {
      c.hidden = j["network"].value("hidden", c.hidden);
      c.leaky_slope = j["network"].value("leaky_slope", c.leaky_slope);
    }
    if (j.contains("train")) {
      c.train = j.at("train").get<TrainConfig>();
      c.train_fraction = j["train"].value("train_fraction", c.train_fraction);
    }
    if (j.contains("simulate")) {
      const auto& s = j["simulate"];
      c.simulate.t_start = s.value("t_start", c.simulate.t_start);
      c.simulate.t_end = s.value("t_end", c.simulate.t_end);
      c.simulate.mode = sampler_mode_from_string(s.value("mode", to_string(c.simulate.mode)));
      c.simulate.timing = feature_timing_from_string(s.value("timing", to_string(c.simulate.timing)));
      c.ensemble = s.value("ensemble", c.ensemble);
    }
    if (j.contains("validate")) {
      const auto& v = j["validate"];
      c.stats.max_lag_time = v.value("max_lag_time", c.stats.max_lag_time);
      c.stats.pdf_points = v.value("pdf_points", c.stats.pdf_points);
      c.thresholds = v.get<Thresholds>();
    }
    c.simulate.dt = c.l96.dt;
    c.train.seed = c.train_seed();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// The named experiments. Every recipe shares the defaults above and changes
/// only the coupling strength, the lag set, the locality and the sampler mode.
inline const std::map<std::string, json>& recipes() {
  static const std::map<std::string, json> r = [] {
    auto lags = [](int count) {
      std::vector<int> v(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = i;
      return v;
    };
    std::map<std::string, json> m;
    m["unimodal-lag2"] = {{"name", "unimodal-lag2"},
                          {"l96", {{"h_x", -1.0}}},
                          {"features", {{"x_lags", {0, 9}}, {"locality", "full_vector"}}}};
    m["bimodal-lag10"] = {{"name", "bimodal-lag10"},
                          {"l96", {{"h_x", -2.0}}},
                          {"features", {{"x_lags", lags(10)}, {"locality", "full_vector"}}}};
    m["bimodal-lag75"] = {{"name", "bimodal-lag75"},
                          {"l96", {{"h_x", -2.0}}},
                          {"features", {{"x_lags", lags(75)}, {"locality", "full_vector"}}}};
    m["local-stochastic"] = {{"name", "local-stochastic"},
                             {"l96", {{"h_x", -1.0}}},
                             {"features", {{"x_lags", lags(75)}, {"locality", "local"}}},
                             {"simulate", {{"mode", "stochastic"}}}};
    m["local-deterministic"] = {{"name", "local-deterministic"},
                                {"l96", {{"h_x", -1.0}}},
                                {"features", {{"x_lags", lags(75)}, {"locality", "local"}}},
                                {"simulate", {{"mode", "deterministic"}}}};
    return m;
  }();
  return r;
}

inline json recipe_json(const std::string& name) {
  const auto it = recipes().find(name);
  if (it == recipes().end()) {
    std::string known;
    for (const auto& [k, v] : recipes()) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown recipe '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

/// Applies `key.path=value`; the value is parsed as JSON when possible and
/// taken as a string otherwise.
inline void apply_override(json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + std::string(assignment) + "'");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: empty path component in '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError("--set: '" + part + "' is not an object in '" + key + "'");
    node = &child;
    start = dot + 1;
  }
}

/// recipe (optional) <- config file (optional) <- overrides, in that order.
inline ExperimentConfig resolve_config(const std::string& recipe, const std::string& config_file,
                                       const std::vector<std::string>& overrides) {
  json j = recipe.empty() ? json::object() : recipe_json(recipe);
  if (!config_file.empty()) j.merge_patch(read_json(config_file));
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

/// Identity of the feature pipeline a network was trained against.
inline std::string feature_hash(const FeatureSpec& spec, const StandardScaler& scaler, const BinningScheme& bins) {
  const json j = {{"features", spec}, {"scaler", scaler}, {"bins", bins}};
  return content_hash(j.dump());
}

/// File names inside an output directory.
struct ArtifactPaths {
  fs::path dir;

  fs::path trajectory() const { return dir / "trajectory.csv"; }
  fs::path trajectory_manifest() const { return dir / "trajectory.json"; }
  fs::path network() const { return dir / "network.json"; }
  fs::path scaler() const { return dir / "scaler.json"; }
  fs::path bins() const { return dir / "bins.json"; }
  fs::path loss_history() const { return dir / "loss_history.csv"; }
  fs::path train_manifest() const { return dir / "train.json"; }
  fs::path reduced(int member = 0) const {
    return dir / (member == 0 ? std::string("reduced.csv") : "reduced_" + std::to_string(member) + ".csv");
  }
  fs::path reduced_manifest() const { return dir / "reduced.json"; }
  fs::path stats_report() const { return dir / "stats_report.json"; }
};

using Logger = std::function<void(const std::string&)>;

inline void log_to(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

/// First `fraction` of a trajectory (inclusive of the split row).
inline Trajectory training_part(const Trajectory& traj, double fraction) {
  const auto last = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(traj.rows() - 1)));
  return traj.slice(0, last + 1);
}

// --- generate ---------------------------------------------------------------

inline Trajectory run_generate(const ExperimentConfig& cfg) {
  RandomEngine rng(cfg.data_seed());
  return generate_trajectory(cfg.l96, cfg.t_end, cfg.burn_in, rng);
}

inline void cmd_generate(const ExperimentConfig& cfg, const fs::path& out_dir, const Logger& log = {}) {
  cfg.validate();
  ArtifactPaths out{out_dir};
  log_to(log, "generating " + std::to_string(step_count(cfg.t_end, cfg.l96.dt) + 1) + " rows (h_x=" +
                  std::to_string(cfg.l96.h_x) + ")");
  const Trajectory traj = run_generate(cfg);
  const std::string csv = trajectory_to_csv(traj);
  write_text(out.trajectory(), csv);
  write_json(out.trajectory_manifest(), json{{"tool_version", tool_version},
                                             {"stage", "generate"},
                                             {"config", config_to_json(cfg)},
                                             {"l96", cfg.l96},
                                             {"seed", cfg.seed},
                                             {"data_stream_seed", cfg.data_seed()},
                                             {"burn_in", cfg.burn_in},
                                             {"t_end", cfg.t_end},
                                             {"rows", traj.rows()},
                                             {"trajectory_hash", content_hash(csv)}});
}

// --- train ------------------------------------------------------------------

struct TrainedArtifacts {
  Surrogate surrogate;
  std::vector<double> loss_history;
  std::vector<double> misclassification;
  std::string hash;

  double mean_misclassification() const {
    double s = 0.0;
    for (double m : misclassification) s += m;
    return misclassification.empty() ? 0.0 : s / static_cast<double>(misclassification.size());
  }
};

inline QSNArchitecture architecture_for(const ExperimentConfig& cfg, const FeatureMatrix& fm) {
  QSNArchitecture a;
  a.input_dim = static_cast<int>(fm.dim());
  a.hidden = cfg.hidden;
  a.leaky_slope = cfg.leaky_slope;
  a.heads = fm.heads();
  a.bins = cfg.bins;
  return a;
}

inline TrainedArtifacts run_train(const ExperimentConfig& cfg, const Trajectory& traj, const Logger& log = {}) {
  cfg.validate();
  const Trajectory part = training_part(traj, cfg.train_fraction);
  FeatureMatrix fm = build_features(part, cfg.features);
  TrainedArtifacts out;
  out.surrogate.spec = cfg.features;
  out.surrogate.scaler = StandardScaler::fit(fm.features);
  out.surrogate.scaler.apply(fm.features);
  out.surrogate.bins = fit_bins(fm.targets, cfg.bins, cfg.bin_method);
  assign_labels(fm, out.surrogate.bins);
  out.surrogate.net = init_network(architecture_for(cfg, fm), cfg.init_seed());
  log_to(log, "training on " + std::to_string(fm.rows()) + " rows x " + std::to_string(fm.dim()) + " features, " +
                  std::to_string(fm.heads()) + " heads, " + std::to_string(out.surrogate.net.parameter_count()) +
                  " parameters");
  const auto report = [&log, n = cfg.train.iterations](int it, double l) {
    if ((it + 1) % 1000 == 0 || it + 1 == n)
      log_to(log, "iteration " + std::to_string(it + 1) + "/" + std::to_string(n) + " loss " + std::to_string(l));
  };
  out.loss_history = train(out.surrogate.net, fm, cfg.train, report).loss_history;
  out.misclassification = misclassification_rate(out.surrogate.net, fm);
  out.hash = feature_hash(out.surrogate.spec, out.surrogate.scaler, out.surrogate.bins);
  return out;
}

inline void cmd_train(const ExperimentConfig& cfg, const fs::path& trajectory_file, const fs::path& out_dir,
                      const Logger& log = {}) {
  ArtifactPaths out{out_dir};
  const std::string csv = read_text(trajectory_file);
  const Trajectory traj = trajectory_from_csv(csv, trajectory_file.string());
  const TrainedArtifacts art = run_train(cfg, traj, log);

  json net = art.surrogate.net;
  net["feature_spec"] = art.surrogate.spec;
  net["feature_hash"] = art.hash;
  net["train_config"] = cfg.train;
  write_json(out.network(), net);
  write_json(out.scaler(), art.surrogate.scaler);
  write_json(out.bins(), art.surrogate.bins);

  std::string loss = "iteration,loss\n";
  for (std::size_t i = 0; i < art.loss_history.size(); ++i) {
    loss += std::to_string(i + 1) + ",";
    append_double(loss, art.loss_history[i]);
    loss += '\n';
  }
  write_text(out.loss_history(), loss);
  write_json(out.train_manifest(), json{{"tool_version", tool_version},
                                        {"stage", "train"},
                                        {"config", config_to_json(cfg)},
                                        {"trajectory_hash", content_hash(csv)},
                                        {"feature_hash", art.hash},
                                        {"init_seed", cfg.init_seed()},
                                        {"train_seed", cfg.train.seed},
                                        {"final_loss", art.loss_history.back()},
                                        {"misclassification", art.misclassification},
                                        {"mean_misclassification", art.mean_misclassification()}});
  log_to(log, "mean misclassification " + std::to_string(art.mean_misclassification()));
}

// --- simulate ---------------------------------------------------------------

/// Loads a trained surrogate and checks it against the configured feature spec.
inline Surrogate load_surrogate(const ExperimentConfig& cfg, const fs::path& artifact_dir) {
  ArtifactPaths in{artifact_dir};
  const json net_json = read_json(in.network());
  Surrogate s;
  try {
    s.spec = cfg.features;
    s.scaler = read_json(in.scaler()).get<StandardScaler>();
    s.bins = read_json(in.bins()).get<BinningScheme>();
    s.net = net_json.get<QSNetwork>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed artifact: ") + e.what());
  }
  const std::string recorded = net_json.value("feature_hash", std::string());
  const std::string actual = feature_hash(s.spec, s.scaler, s.bins);
  if (recorded != actual)
    throw ConfigError("artifact hash mismatch: network was trained against feature pipeline " + recorded +
                      ", configuration and artifacts give " + actual +
                      " (different lag spec, or scaler/bins from another run?)");
  s.check(cfg.l96.N);
  return s;
}

inline std::vector<Trajectory> run_simulate(const ExperimentConfig& cfg, const Surrogate& s, const Trajectory& reference) {
  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < cfg.ensemble; ++k) seeds.push_back(cfg.simulate_seed(k));
  if (seeds.size() == 1) {
    ReducedRunConfig rc = cfg.simulate;
    rc.seed = seeds[0];
    return {simulate_reduced(rc, s, cfg.l96, reference)};
  }
  return simulate_ensemble(cfg.simulate, seeds, s, cfg.l96, reference);
}

inline void cmd_simulate(const ExperimentConfig& cfg, const fs::path& artifact_dir, const fs::path& trajectory_file,
                         const fs::path& out_dir, const Logger& log = {}) {
  cfg.validate();
  ArtifactPaths out{out_dir};
  const Surrogate s = load_surrogate(cfg, artifact_dir);
  const std::string ref_csv = read_text(trajectory_file);
  const Trajectory reference = trajectory_from_csv(ref_csv, trajectory_file.string());
  log_to(log, "simulating " + std::to_string(cfg.ensemble) + " run(s), mode " + to_string(cfg.simulate.mode) +
                  ", t_end " + std::to_string(cfg.simulate.t_end));
  const auto runs = run_simulate(cfg, s, reference);
  json members = json::array();
  for (int k = 0; k < static_cast<int>(runs.size()); ++k) {
    const std::string csv = trajectory_to_csv(runs[static_cast<std::size_t>(k)]);
    write_text(out.reduced(k), csv);
    members.push_back(json{{"file", out.reduced(k).filename().string()},
                           {"seed", cfg.simulate_seed(k)},
                           {"trajectory_hash", content_hash(csv)}});
  }
  write_json(out.reduced_manifest(), json{{"tool_version", tool_version},
                                          {"stage", "simulate"},
                                          {"config", config_to_json(cfg)},
                                          {"mode", to_string(cfg.simulate.mode)},
                                          {"timing", to_string(cfg.simulate.timing)},
                                          {"feature_spec", cfg.features},
                                          {"feature_hash", feature_hash(s.spec, s.scaler, s.bins)},
                                          {"network_hash", content_hash(read_text(ArtifactPaths{artifact_dir}.network()))},
                                          {"reference_hash", content_hash(ref_csv)},
                                          {"members", members}});
}

// --- validate ---------------------------------------------------------------

struct ValidationResult {
  StatsReport reference;
  StatsReport surrogate;
  Comparison comparison;
};

inline ValidationResult run_validate(const ExperimentConfig& cfg, const Trajectory& reference, const Trajectory& reduced) {
  if (reference.sites() != reduced.sites()) throw ConfigError("validate: site counts differ");
  auto [ref, sur] = compute_report_pair(reference, reduced, cfg.stats);
  ValidationResult v{std::move(ref), std::move(sur), {}};
  v.comparison = compare(v.reference, v.surrogate, cfg.thresholds);
  return v;
}

/// Writes the report and per-figure curves; returns exit_ok on pass and
/// exit_validation_failed otherwise.
inline int cmd_validate(const ExperimentConfig& cfg, const fs::path& reference_file, const fs::path& reduced_file,
                        const fs::path& out_dir, const fs::path& train_manifest = {}, const Logger& log = {}) {
  ArtifactPaths out{out_dir};
  const Trajectory reference = read_trajectory_csv(reference_file);
  const Trajectory reduced = read_trajectory_csv(reduced_file);
  ValidationResult v = run_validate(cfg, reference, reduced);
  if (!train_manifest.empty() && fs::exists(train_manifest)) {
    const json tm = read_json(train_manifest);
    v.surrogate.misclassification = tm.value("misclassification", std::vector<double>{});
  }
  write_json(out.stats_report(), json{{"tool_version", tool_version},
                                      {"stage", "validate"},
                                      {"config", config_to_json(cfg)},
                                      {"thresholds", cfg.thresholds},
                                      {"comparison", v.comparison},
                                      {"reference", v.reference},
                                      {"surrogate", v.surrogate}});
  auto pdf_csv = [](const DensityCurve& a, const DensityCurve& b) { return curves_csv("x", a.grid, a.density, b.density); };
  auto cor_csv = [](const CorrelationCurve& a, const CorrelationCurve& b) {
    return curves_csv("lag_time", a.lag_time, a.values, b.values);
  };
  write_text(out.dir / "pdf_X.csv", pdf_csv(v.reference.pdf_X, v.surrogate.pdf_X));
  write_text(out.dir / "pdf_r.csv", pdf_csv(v.reference.pdf_r, v.surrogate.pdf_r));
  write_text(out.dir / "acf_X.csv", cor_csv(v.reference.acf_X, v.surrogate.acf_X));
  write_text(out.dir / "acf_r.csv", cor_csv(v.reference.acf_r, v.surrogate.acf_r));
  write_text(out.dir / "ccf_X.csv", cor_csv(v.reference.ccf_X, v.surrogate.ccf_X));
  write_text(out.dir / "ccf_r.csv", cor_csv(v.reference.ccf_r, v.surrogate.ccf_r));
  const auto& c = v.comparison;
  log_to(log, "hellinger(pdf X) " + std::to_string(c.hellinger_X) + ", rel. L2 acf X " + std::to_string(c.acf_X) +
                  ", rel. L2 ccf X " + std::to_string(c.ccf_X) + (c.pass ? " -> PASS" : " -> FAIL"));
  return c.pass ? exit_ok : exit_validation_failed;
}

} // namespace qsn
