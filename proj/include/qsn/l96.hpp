#pragma once

// Two-layer Lorenz 96 system with AB2 time stepping.

#include "qsn/common.hpp"
#include "qsn/rng.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <string>

namespace qsn {

struct L96Params {
  int N = 18;
  int L = 20;
  double F = 10.0;
  double h_x = -1.0;
  double h_y = 1.0;
  double eps = 0.5;
  double dt = 0.01;
  /// Sign in front of F in the macro tendency. +1 is the classical L96
  /// convention; -1 gives "- X_n - F + r_n", which does not develop the
  /// bimodal regime at h_x = -2.
  int forcing_sign = 1;

  void validate() const {
    if (N < 4) throw ConfigError("L96Params: N must be >= 4, got " + std::to_string(N));
    if (L < 4) throw ConfigError("L96Params: L must be >= 4, got " + std::to_string(L));
    if (!(eps > 0.0)) throw ConfigError("L96Params: eps must be > 0");
    if (!(dt > 0.0)) throw ConfigError("L96Params: dt must be > 0");
    if (forcing_sign != 1 && forcing_sign != -1) throw ConfigError("L96Params: forcing_sign must be +1 or -1");
    if (!std::isfinite(F) || !std::isfinite(h_x) || !std::isfinite(h_y))
      throw ConfigError("L96Params: non-finite coefficient");
  }

  static L96Params unimodal() { return L96Params{}; }
  static L96Params bimodal() {
    L96Params p;
    p.h_x = -2.0;
    return p;
  }
};

/// Y is stored site-major: Y(l, n) lives at n * L + l. With that layout the
/// boundary rule Y_{l+L,n} = Y_{l,n+1} makes Y a single ring of length N*L.
struct FullState {
  Vector X;
  Vector Y;

  static FullState zeros(const L96Params& p) { return {Vector::Zero(p.N), Vector::Zero(p.N * p.L)}; }
  bool finite() const { return X.allFinite() && Y.allFinite(); }
};

struct FullTendency {
  Vector dX;
  Vector dY;
};

/// Time-indexed record of (X, r), one row per macro step.
struct Trajectory {
  Vector times;
  RowMatrix X;
  RowMatrix r;

  Eigen::Index rows() const { return times.size(); }
  int sites() const { return static_cast<int>(X.cols()); }
  double dt() const { return rows() > 1 ? times[1] - times[0] : 0.0; }

  void check() const {
    if (X.rows() != times.size() || r.rows() != times.size())
      throw ConfigError("Trajectory: row counts of X, r and times differ");
    if (X.cols() != r.cols()) throw ConfigError("Trajectory: X and r have different site counts");
    if (!X.allFinite() || !r.allFinite() || !times.allFinite()) throw NumericError("Trajectory: non-finite entries");
    const double h = dt();
    for (Eigen::Index j = 1; j < rows(); ++j)
      if (!(h > 0.0) || std::abs(times[j] - times[j - 1] - h) > 1e-6 * h)
        throw ConfigError("Trajectory: times must increase with uniform spacing (row " + std::to_string(j) + ")");
  }

  /// Rows [first, first + count) as a new trajectory.
  Trajectory slice(Eigen::Index first, Eigen::Index count) const {
    if (first < 0 || count < 0 || first + count > rows()) throw ConfigError("Trajectory::slice out of range");
    return {times.segment(first, count), X.middleRows(first, count), r.middleRows(first, count)};
  }
};

inline Vector coupling_r(const Vector& Y, const L96Params& p) {
  if (Y.size() != static_cast<Eigen::Index>(p.N) * p.L)
    throw ConfigError("coupling_r: Y has " + std::to_string(Y.size()) + " entries, expected N*L");
  if (!Y.allFinite()) throw NumericError("coupling_r: non-finite micro state");
  const Eigen::Map<const Eigen::MatrixXd> per_site(Y.data(), p.L, p.N);
  return (p.h_x / p.L) * per_site.colwise().sum().transpose();
}

inline Vector rhs_macro(const Vector& X, const Vector& r, const L96Params& p) {
  const Eigen::Index N = p.N;
  if (X.size() != N || r.size() != N) throw ConfigError("rhs_macro: X and r must both have N entries");
  Vector out(N);
  const double forcing = p.forcing_sign * p.F;
  for (Eigen::Index n = 0; n < N; ++n) {
    const double xm1 = X[(n + N - 1) % N];
    const double xp1 = X[(n + 1) % N];
    const double xm2 = X[(n + N - 2) % N];
    out[n] = xm1 * (xp1 - xm2) - X[n] + forcing + r[n];
  }
  return out;
}

inline Vector rhs_micro(const Vector& X, const Vector& Y, const L96Params& p) {
  const Eigen::Index K = static_cast<Eigen::Index>(p.N) * p.L;
  if (X.size() != p.N || Y.size() != K) throw ConfigError("rhs_micro: shapes inconsistent with params");
  Vector out(K);
  const double inv_eps = 1.0 / p.eps;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double yp1 = Y[(k + 1) % K];
    const double ym1 = Y[(k + K - 1) % K];
    const double yp2 = Y[(k + 2) % K];
    out[k] = inv_eps * (yp1 * (ym1 - yp2) - Y[k] + p.h_y * X[k / p.L]);
  }
  return out;
}

inline FullTendency rhs_full(const FullState& s, const L96Params& p) {
  return {rhs_macro(s.X, coupling_r(s.Y, p), p), rhs_micro(s.X, s.Y, p)};
}

/// s + dt * (3/2 f_curr - 1/2 f_prev), or forward Euler when there is no
/// previous tendency yet.
template <class V>
V ab2_combine(const V& s, const V& f_curr, const V* f_prev, double dt) {
  if (f_prev == nullptr) return s + dt * f_curr;
  return s + dt * (1.5 * f_curr - 0.5 * (*f_prev));
}

struct Ab2Result {
  FullState state;
  /// f(s_j), to be passed as the previous tendency of the next step.
  FullTendency tendency;
};

inline Ab2Result ab2_step(const FullState& curr, const std::optional<FullTendency>& prev, const L96Params& p,
                          std::size_t step_index = 0) {
  FullTendency f = rhs_full(curr, p);
  FullState next{ab2_combine<Vector>(curr.X, f.dX, prev ? &prev->dX : nullptr, p.dt),
                 ab2_combine<Vector>(curr.Y, f.dY, prev ? &prev->dY : nullptr, p.dt)};
  if (!next.finite())
    throw BlowUpError(step_index + 1, static_cast<double>(step_index + 1) * p.dt, "full L96 state became non-finite");
  return {std::move(next), std::move(f)};
}

/// X ~ N(0, 1) per site, Y = 0.
inline FullState random_initial_state(const L96Params& p, RandomEngine& rng) {
  FullState s = FullState::zeros(p);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index n = 0; n < s.X.size(); ++n) s.X[n] = normal(rng);
  return s;
}

inline Eigen::Index step_count(double duration, double dt) {
  return static_cast<Eigen::Index>(std::llround(duration / dt));
}

/// Integrate the full system for burn_in + t_end and record (X, r) at every
/// macro step after the burn-in. Recorded times restart at 0.
inline Trajectory generate_trajectory(const L96Params& p, double t_end, double burn_in, FullState init) {
  p.validate();
  if (!(t_end > 0.0)) throw ConfigError("generate_trajectory: t_end must be > 0");
  if (burn_in < 0.0) throw ConfigError("generate_trajectory: burn_in must be >= 0");
  if (init.X.size() != p.N || init.Y.size() != static_cast<Eigen::Index>(p.N) * p.L)
    throw ConfigError("generate_trajectory: initial state shape does not match params");
  if (!init.finite()) throw NumericError("generate_trajectory: non-finite initial state");

  const Eigen::Index burn_steps = step_count(burn_in, p.dt);
  const Eigen::Index rec_steps = step_count(t_end, p.dt);

  Trajectory traj;
  traj.times.resize(rec_steps + 1);
  traj.X.resize(rec_steps + 1, p.N);
  traj.r.resize(rec_steps + 1, p.N);

  FullState s = std::move(init);
  std::optional<FullTendency> prev;
  std::size_t global_step = 0;
  for (Eigen::Index j = 0; j < burn_steps; ++j, ++global_step) {
    auto res = ab2_step(s, prev, p, global_step);
    s = std::move(res.state);
    prev = std::move(res.tendency);
  }
  for (Eigen::Index j = 0;; ++j, ++global_step) {
    traj.times[j] = static_cast<double>(j) * p.dt;
    traj.X.row(j) = s.X.transpose();
    traj.r.row(j) = coupling_r(s.Y, p).transpose();
    if (j == rec_steps) break;
    auto res = ab2_step(s, prev, p, global_step);
    s = std::move(res.state);
    prev = std::move(res.tendency);
  }
  return traj;
}

inline Trajectory generate_trajectory(const L96Params& p, double t_end, double burn_in, RandomEngine& rng) {
  p.validate();
  return generate_trajectory(p, t_end, burn_in, random_initial_state(p, rng));
}

} // namespace qsn
