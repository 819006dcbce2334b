#pragma once

// Reduced macroscopic model: the X equation of L96 closed by a resampling
// surrogate for r, stepped with AB2.

#include "qsn/common.hpp"
#include "qsn/features.hpp"
#include "qsn/l96.hpp"
#include "qsn/network.hpp"
#include "qsn/resampler.hpp"
#include "qsn/rng.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace qsn {

/// Ring buffer of the most recent macro states and subgrid values.
class HistoryBuffer {
public:
  HistoryBuffer() = default;
  HistoryBuffer(Eigen::Index depth, Eigen::Index sites)
      : x_(RowMatrix::Zero(depth, sites)), r_(RowMatrix::Zero(depth, sites)) {
    if (depth < 1) throw ConfigError("HistoryBuffer: depth must be >= 1");
  }

  Eigen::Index depth() const { return x_.rows(); }
  Eigen::Index sites() const { return x_.cols(); }
  Eigen::Index size() const { return size_; }
  bool full() const { return size_ == depth(); }

  /// Push the newest (X, r); the oldest entry is evicted once full.
  template <class A, class B>
  void push(const A& x, const B& r) {
    newest_ = (newest_ + 1) % depth();
    x_.row(newest_) = x.transpose();
    r_.row(newest_) = r.transpose();
    size_ = std::min(size_ + 1, depth());
  }

  /// Replace r of the newest entry.
  template <class B>
  void set_newest_r(const B& r) {
    r_.row(newest_) = r.transpose();
  }

  auto x_at(int lag) const { return x_.row(slot(lag)); }
  auto r_at(int lag) const { return r_.row(slot(lag)); }

private:
  Eigen::Index slot(int lag) const {
    if (lag < 0 || lag >= size_) throw ConfigError("HistoryBuffer: lag " + std::to_string(lag) + " not available");
    return (newest_ - lag + depth()) % depth();
  }

  RowMatrix x_;
  RowMatrix r_;
  Eigen::Index newest_ = -1;
  Eigen::Index size_ = 0;
};

/// History holding X_{j-J..j} and r_{j-J..j} of a reference trajectory, plus
/// `extra` older entries.
inline HistoryBuffer warm_start(const Trajectory& traj, const FeatureSpec& spec, Eigen::Index j, int extra = 0) {
  spec.validate();
  const int J = spec.max_lag() + extra;
  if (j < J || j >= traj.rows())
    throw ConfigError("warm_start: index " + std::to_string(j) + " needs " + std::to_string(J) +
                      " earlier rows and must lie inside the trajectory");
  HistoryBuffer buf(J + 1, traj.sites());
  for (Eigen::Index k = j - J; k <= j; ++k) buf.push(traj.X.row(k).transpose(), traj.r.row(k).transpose());
  return buf;
}

/// Raw (unstandardized) feature vector(s) from a history buffer. Full-vector
/// specs give one column; local specs give one column per site.
inline Matrix history_features(const HistoryBuffer& h, const FeatureSpec& spec, int r_lag_offset = 0) {
  const int N = static_cast<int>(h.sites());
  const bool local = spec.locality == Locality::local;
  Matrix out(spec.feature_dim(N), local ? N : 1);
  auto x_at = [&](int lag) { return h.x_at(lag); };
  auto r_at = [&](int lag) { return h.r_at(lag + r_lag_offset); };
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    fill_feature_row(spec, x_at, r_at, N, static_cast<int>(c),
                     std::span<double>(out.col(c).data(), static_cast<std::size_t>(out.rows())));
  return out;
}

/// Everything needed to turn a lag history into sampled subgrid values.
struct Surrogate {
  FeatureSpec spec;
  StandardScaler scaler;
  BinningScheme bins;
  QSNetwork net;

  /// Shapes of the four parts agree for a system with `sites` sites.
  void check(int sites) const {
    spec.validate();
    const int dim = spec.feature_dim(sites);
    const int heads = spec.heads(sites);
    if (net.arch.input_dim != dim) throw ConfigError("surrogate: network input does not match feature spec");
    if (scaler.dim() != dim) throw ConfigError("surrogate: scaler dimension does not match feature spec");
    if (net.arch.heads != heads || bins.head_count() != heads)
      throw ConfigError("surrogate: head counts of network, bins and feature spec differ");
    if (bins.bins() != net.arch.bins) throw ConfigError("surrogate: bin count of network and scheme differ");
  }
};

/// When the feature vector used to draw r_{j+1} is assembled.
enum class FeatureTiming {
  /// After the macro update: X lags count back from X_{j+1}, r lags from r_j.
  post_update,
  /// Before the macro update: lags count back from (X_j, r_j), as in training.
  pre_update,
};

inline std::string to_string(FeatureTiming t) { return t == FeatureTiming::pre_update ? "pre_update" : "post_update"; }

inline FeatureTiming feature_timing_from_string(const std::string& s) {
  if (s == "post_update") return FeatureTiming::post_update;
  if (s == "pre_update") return FeatureTiming::pre_update;
  throw ConfigError("unknown feature timing '" + s + "' (expected post_update or pre_update)");
}

/// Maps a lag history to r_{j+1}. The buffer's newest X is the state the
/// features should start from.
using Closure = std::function<Vector(const HistoryBuffer&, int r_lag_offset)>;

/// Closure backed by a trained surrogate. Full-vector: head h draws from
/// streams[h]. Local: one network, applied at every site n with streams[n].
class QsnClosure {
public:
  QsnClosure(const Surrogate& s, SamplerMode mode, std::vector<RandomEngine> streams)
      : s_(&s), mode_(mode), streams_(std::move(streams)) {}

  Vector operator()(const HistoryBuffer& h, int r_lag_offset) {
    const int N = static_cast<int>(h.sites());
    Matrix feats = history_features(h, s_->spec, r_lag_offset);
    for (Eigen::Index c = 0; c < feats.cols(); ++c)
      s_->scaler.apply_row(std::span<double>(feats.col(c).data(), static_cast<std::size_t>(feats.rows())));
    forward(s_->net, feats, cache_);
    const int bins = s_->net.arch.bins;
    if (mode_ == SamplerMode::stochastic && static_cast<int>(streams_.size()) < N)
      throw ConfigError("QsnClosure: need one random stream per site");
    const bool local = s_->spec.locality == Locality::local;
    Vector out(N);
    for (int n = 0; n < N; ++n) {
      const Eigen::Index col = local ? n : 0;
      const int head = local ? 0 : n;
      RandomEngine* rng = mode_ == SamplerMode::stochastic ? &streams_[static_cast<std::size_t>(n)] : nullptr;
      out[n] = draw_from_pmf(s_->bins.heads[static_cast<std::size_t>(head)],
                             cache_.pmf.col(col).segment(head * bins, bins), mode_, rng);
    }
    return out;
  }

private:
  const Surrogate* s_;
  SamplerMode mode_;
  std::vector<RandomEngine> streams_;
  ForwardCache cache_;
};

/// Macro state of the reduced model between steps.
struct ReducedState {
  Vector X;
  Vector r;
  std::optional<Vector> prev_tendency;
  HistoryBuffer history;
  std::size_t step = 0;
};

/// One macro step: X_{j+1} = AB2(X_j; r_j held fixed over the step), then
/// r_{j+1} from the closure. Returns the new (X, r) via `state`.
inline void step_reduced(ReducedState& state, Closure& closure, const L96Params& p, FeatureTiming timing) {
  Vector f = rhs_macro(state.X, state.r, p);
  Vector next = ab2_combine<Vector>(state.X, f, state.prev_tendency ? &*state.prev_tendency : nullptr, p.dt);
  if (!next.allFinite())
    throw BlowUpError(state.step + 1, static_cast<double>(state.step + 1) * p.dt, "reduced model state became non-finite",
                      state.X);
  Vector r_next;
  if (timing == FeatureTiming::pre_update) {
    r_next = closure(state.history, 0);
    state.history.push(next, r_next);
  } else {
    // r_{j+1} is not known yet; push a placeholder and read r lags one slot back
    state.history.push(next, state.r);
    r_next = closure(state.history, 1);
    state.history.set_newest_r(r_next);
  }
  if (!r_next.allFinite()) throw NumericError("step_reduced: closure returned non-finite r");
  state.prev_tendency = std::move(f);
  state.X = std::move(next);
  state.r = std::move(r_next);
  ++state.step;
}

struct ReducedRunConfig {
  /// Reference time at which the reduced run takes over; clamped up to the
  /// first time with a full lag history.
  double t_start = 0.0;
  double t_end = 1000.0;
  double dt = 0.01;
  SamplerMode mode = SamplerMode::stochastic;
  FeatureTiming timing = FeatureTiming::post_update;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(t_end > t_start)) throw ConfigError("ReducedRunConfig: t_end must exceed t_start");
    if (!(dt > 0.0)) throw ConfigError("ReducedRunConfig: dt must be > 0");
  }
};

/// Runs any closure from a warm start at reference row `j0`. Rows 0..j0 of
/// the result are copied from the reference.
inline Trajectory simulate_with_closure(const Trajectory& reference, const FeatureSpec& spec, Eigen::Index j0,
                                        Eigen::Index last_row, Closure closure, const L96Params& p,
                                        FeatureTiming timing) {
  reference.check();
  if (last_row < j0) throw ConfigError("simulate: end lies before the warm-start index");
  ReducedState state;
  const int extra = timing == FeatureTiming::post_update && !spec.r_lags.empty() ? 1 : 0;
  state.history = warm_start(reference, spec, j0, extra);
  state.X = reference.X.row(j0).transpose();
  state.r = reference.r.row(j0).transpose();
  state.step = static_cast<std::size_t>(j0);

  Trajectory out;
  const Eigen::Index rows = last_row + 1;
  out.times.resize(rows);
  out.X.resize(rows, reference.sites());
  out.r.resize(rows, reference.sites());
  for (Eigen::Index j = 0; j <= j0; ++j) {
    out.times[j] = static_cast<double>(j) * p.dt;
    out.X.row(j) = reference.X.row(j);
    out.r.row(j) = reference.r.row(j);
  }
  for (Eigen::Index j = j0 + 1; j < rows; ++j) {
    step_reduced(state, closure, p, timing);
    out.times[j] = static_cast<double>(j) * p.dt;
    out.X.row(j) = state.X.transpose();
    out.r.row(j) = state.r.transpose();
  }
  return out;
}

/// Independent per-site streams for one run.
inline std::vector<RandomEngine> site_streams(std::uint64_t run_seed, int sites) {
  std::vector<RandomEngine> s;
  s.reserve(static_cast<std::size_t>(sites));
  for (int n = 0; n < sites; ++n) s.push_back(make_stream(run_seed, "site", static_cast<std::uint64_t>(n)));
  return s;
}

inline Trajectory simulate_reduced(const ReducedRunConfig& cfg, const Surrogate& surrogate, const L96Params& p,
                                   const Trajectory& reference) {
  cfg.validate();
  p.validate();
  if (std::abs(cfg.dt - p.dt) > 1e-12 * p.dt) throw ConfigError("simulate_reduced: run dt must equal training dt");
  if (reference.rows() > 1 && std::abs(reference.dt() - p.dt) > 1e-9 * p.dt)
    throw ConfigError("simulate_reduced: reference trajectory dt differs from params dt");
  surrogate.check(p.N);
  if (reference.sites() != p.N) throw ConfigError("simulate_reduced: reference has wrong site count");

  const int extra = cfg.timing == FeatureTiming::post_update && !surrogate.spec.r_lags.empty() ? 1 : 0;
  const Eigen::Index j0 = std::max<Eigen::Index>(surrogate.spec.max_lag() + extra, step_count(cfg.t_start, p.dt));
  const Eigen::Index last = step_count(cfg.t_end, p.dt);
  QsnClosure qsn(surrogate, cfg.mode, site_streams(cfg.seed, p.N));
  return simulate_with_closure(reference, surrogate.spec, j0, last,
                               [&qsn](const HistoryBuffer& h, int off) { return qsn(h, off); }, p, cfg.timing);
}

/// Independent runs with seeds cfg.seed derived per member, in parallel.
inline std::vector<Trajectory> simulate_ensemble(const ReducedRunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                                 const Surrogate& surrogate, const L96Params& p,
                                                 const Trajectory& reference) {
  std::vector<Trajectory> out(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t first = 0; first < seeds.size(); first += workers) {
    std::vector<std::jthread> pool;
    for (std::size_t k = first; k < std::min(seeds.size(), first + workers); ++k) {
      pool.emplace_back([&, k] {
        try {
          ReducedRunConfig member = cfg;
          member.seed = seeds[k];
          out[k] = simulate_reduced(member, surrogate, p, reference);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

} // namespace qsn
