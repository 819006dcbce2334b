#pragma once

// Validation statistics: site-pooled kernel density of X and r, site-averaged
// autocorrelation, and neighbor cross-correlation, plus distances between a
// reference and a surrogate report.

#include "qsn/common.hpp"
#include "qsn/io.hpp"
#include "qsn/l96.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qsn {

struct GridSpec {
  double lo = 0.0;
  double hi = 1.0;
  int points = 256;

  Vector nodes() const { return Vector::LinSpaced(points, lo, hi); }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct DensityCurve {
  Vector grid;
  Vector density;
  double bandwidth = 0.0;
};

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(std::span<const double> samples) {
  const auto n = samples.size();
  if (n < 2) throw ConfigError("silverman_bandwidth: need at least 2 samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n - 1));
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    return i + 1 < n ? s[i] * (1.0 - frac) + s[i + 1] * frac : s[i];
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  if (!(spread > 0.0)) throw DegenerateDataError("silverman_bandwidth: samples have zero spread");
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

/// [min - 3h, max + 3h] with Silverman's h.
inline GridSpec auto_grid(std::span<const double> samples, int points = 256) {
  const double h = silverman_bandwidth(samples);
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  return {*mn - 3.0 * h, *mx + 3.0 * h, points};
}

inline constexpr std::size_t min_pdf_samples = 1000;

/// Gaussian KDE on a uniform grid. The kernel is cut off at 8 bandwidths,
/// where it is below 1.3e-14 of its peak.
inline DensityCurve empirical_pdf(std::span<const double> samples, const GridSpec& grid,
                                  std::optional<double> bandwidth = std::nullopt) {
  if (samples.size() < min_pdf_samples)
    throw ConfigError("empirical_pdf: need at least " + std::to_string(min_pdf_samples) + " samples, got " +
                      std::to_string(samples.size()));
  if (grid.points < 2 || !(grid.hi > grid.lo)) throw ConfigError("empirical_pdf: bad grid");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(s);
  DensityCurve c;
  c.bandwidth = h;
  c.grid = grid.nodes();
  c.density.resize(grid.points);
  const double norm = 1.0 / (static_cast<double>(s.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  const double cutoff = 8.0 * h;
  for (Eigen::Index g = 0; g < c.grid.size(); ++g) {
    const double x = c.grid[g];
    auto it = std::lower_bound(s.begin(), s.end(), x - cutoff);
    const auto end = std::upper_bound(it, s.end(), x + cutoff);
    double acc = 0.0;
    for (; it != end; ++it) {
      const double u = (x - *it) / h;
      acc += std::exp(-0.5 * u * u);
    }
    c.density[g] = acc * norm;
  }
  return c;
}

inline DensityCurve empirical_pdf(std::span<const double> samples, int points = 256) {
  return empirical_pdf(samples, auto_grid(samples, points));
}

inline double trapezoid(const Vector& x, const Vector& y) {
  double s = 0.0;
  for (Eigen::Index i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

/// Local maxima whose topographic prominence is at least `min_prominence`
/// times the global maximum.
inline int count_modes(const DensityCurve& c, double min_prominence = 0.02) {
  const Vector& y = c.density;
  const Eigen::Index n = y.size();
  if (n < 3) return 0;
  const double threshold = min_prominence * y.maxCoeff();
  int modes = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || y[i] > y[i - 1];
    const bool right_ok = i == n - 1 || y[i] >= y[i + 1];
    if (!left_ok || !right_ok) continue;
    // lowest point on the way to higher ground, on each side
    double left_min = y[i];
    bool left_higher = false;
    for (Eigen::Index k = i - 1; k >= 0; --k) {
      if (y[k] > y[i]) {
        left_higher = true;
        break;
      }
      left_min = std::min(left_min, y[k]);
    }
    double right_min = y[i];
    bool right_higher = false;
    for (Eigen::Index k = i + 1; k < n; ++k) {
      if (y[k] > y[i]) {
        right_higher = true;
        break;
      }
      right_min = std::min(right_min, y[k]);
    }
    double base = 0.0;
    if (left_higher && right_higher) base = std::max(left_min, right_min);
    else if (left_higher) base = left_min;
    else if (right_higher) base = right_min;
    if (y[i] - base >= threshold) ++modes;
  }
  return modes;
}

namespace detail {

inline Vector centered(std::span<const double> x, double& sumsq) {
  // copy first: vectorized reductions over differently aligned buffers round differently
  Vector c = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  c.array() -= c.mean();
  sumsq = c.squaredNorm();
  return c;
}

} // namespace detail

/// Biased autocorrelation estimate, acf(k) = sum (x_t - m)(x_{t+k} - m) / sum (x_t - m)^2.
inline Vector acf(std::span<const double> series, int max_lag) {
  const auto T = static_cast<Eigen::Index>(series.size());
  if (max_lag < 0 || T <= max_lag) throw ConfigError("acf: series must be longer than max_lag");
  double denom = 0.0;
  const Vector c = detail::centered(series, denom);
  if (!(denom > 0.0)) throw DegenerateDataError("acf: series has zero variance");
  Vector out(max_lag + 1);
  for (int k = 0; k <= max_lag; ++k) out[k] = c.head(T - k).dot(c.tail(T - k)) / denom;
  out[0] = 1.0;
  return out;
}

/// ccf(k) = sum (a_t - ma)(b_{t+k} - mb) / sqrt(sum (a - ma)^2 sum (b - mb)^2).
inline Vector ccf(std::span<const double> a, std::span<const double> b, int max_lag) {
  if (a.size() != b.size()) throw ConfigError("ccf: series lengths differ");
  const auto T = static_cast<Eigen::Index>(a.size());
  if (max_lag < 0 || T <= max_lag) throw ConfigError("ccf: series must be longer than max_lag");
  double sa = 0.0;
  double sb = 0.0;
  const Vector ca = detail::centered(a, sa);
  const Vector cb = detail::centered(b, sb);
  if (!(sa > 0.0) || !(sb > 0.0)) throw DegenerateDataError("ccf: series has zero variance");
  const double denom = std::sqrt(sa * sb);
  Vector out(max_lag + 1);
  for (int k = 0; k <= max_lag; ++k) out[k] = ca.head(T - k).dot(cb.tail(T - k)) / denom;
  return out;
}

/// Column n of a (time x sites) matrix as a contiguous series.
inline std::vector<double> site_series(const RowMatrix& m, Eigen::Index n) {
  std::vector<double> s(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index t = 0; t < m.rows(); ++t) s[static_cast<std::size_t>(t)] = m(t, n);
  return s;
}

inline Vector site_mean_acf(const RowMatrix& m, int max_lag) {
  Vector acc = Vector::Zero(max_lag + 1);
  for (Eigen::Index n = 0; n < m.cols(); ++n) acc += acf(site_series(m, n), max_lag);
  return acc / static_cast<double>(m.cols());
}

/// ccf of (site n, site n+1 mod N), averaged over the N neighbor pairs.
inline Vector neighbor_mean_ccf(const RowMatrix& m, int max_lag) {
  const Eigen::Index N = m.cols();
  Vector acc = Vector::Zero(max_lag + 1);
  std::vector<std::vector<double>> cols;
  for (Eigen::Index n = 0; n < N; ++n) cols.push_back(site_series(m, n));
  for (Eigen::Index n = 0; n < N; ++n) acc += ccf(cols[static_cast<std::size_t>(n)], cols[static_cast<std::size_t>((n + 1) % N)], max_lag);
  return acc / static_cast<double>(N);
}

inline std::vector<double> pooled(const RowMatrix& m) { return std::vector<double>(m.data(), m.data() + m.size()); }

struct CorrelationCurve {
  /// Lags in model time units.
  Vector lag_time;
  Vector values;
};

struct StatsReport {
  DensityCurve pdf_X;
  DensityCurve pdf_r;
  CorrelationCurve acf_X;
  CorrelationCurve acf_r;
  CorrelationCurve ccf_X;
  CorrelationCurve ccf_r;
  std::vector<double> misclassification;
};

struct StatsOptions {
  /// Correlation window in model time.
  double max_lag_time = 10.0;
  int pdf_points = 256;
};

/// Rows whose time is at or after the midpoint of the trajectory's time span.
inline Trajectory test_half(const Trajectory& traj) {
  traj.check();
  if (traj.rows() < 2) throw ConfigError("test_half: trajectory too short");
  const double t_mid = 0.5 * (traj.times[0] + traj.times[traj.rows() - 1]);
  Eigen::Index first = 0;
  while (first < traj.rows() && traj.times[first] < t_mid - 1e-9 * std::max(1.0, std::abs(t_mid))) ++first;
  return traj.slice(first, traj.rows() - first);
}

inline StatsReport compute_report(const Trajectory& traj, double dt, const StatsOptions& opt, const GridSpec& x_grid,
                                  const GridSpec& r_grid) {
  const int max_lag = static_cast<int>(std::llround(opt.max_lag_time / dt));
  StatsReport rep;
  rep.pdf_X = empirical_pdf(pooled(traj.X), x_grid);
  rep.pdf_r = empirical_pdf(pooled(traj.r), r_grid);
  const Vector lags = Vector::LinSpaced(max_lag + 1, 0.0, max_lag * dt);
  rep.acf_X = {lags, site_mean_acf(traj.X, max_lag)};
  rep.acf_r = {lags, site_mean_acf(traj.r, max_lag)};
  rep.ccf_X = {lags, neighbor_mean_ccf(traj.X, max_lag)};
  rep.ccf_r = {lags, neighbor_mean_ccf(traj.r, max_lag)};
  return rep;
}

/// Grid covering both sample sets, padded by 3 of the larger bandwidth.
inline GridSpec joint_grid(std::span<const double> a, std::span<const double> b, int points) {
  const double h = std::max(silverman_bandwidth(a), silverman_bandwidth(b));
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  return {std::min(*amin, *bmin) - 3.0 * h, std::max(*amax, *bmax) + 3.0 * h, points};
}

/// Reports for a reference and a surrogate trajectory on shared grids,
/// computed over the test half of each.
inline std::pair<StatsReport, StatsReport> compute_report_pair(const Trajectory& reference, const Trajectory& surrogate,
                                                               const StatsOptions& opt = {}) {
  const Trajectory ref = test_half(reference);
  const Trajectory sur = test_half(surrogate);
  if (ref.sites() != sur.sites()) throw ConfigError("compute_report_pair: site counts differ");
  const double dt = reference.dt();
  if (std::abs(surrogate.dt() - dt) > 1e-9 * dt) throw ConfigError("compute_report_pair: time steps differ");
  const auto xr = pooled(ref.X);
  const auto xs = pooled(sur.X);
  const auto rr = pooled(ref.r);
  const auto rs = pooled(sur.r);
  const GridSpec gx = joint_grid(xr, xs, opt.pdf_points);
  const GridSpec gr = joint_grid(rr, rs, opt.pdf_points);
  return {compute_report(ref, dt, opt, gx, gr), compute_report(sur, dt, opt, gx, gr)};
}

/// sqrt(1 - integral sqrt(p q)), clamped to [0, 1]. Both densities are
/// renormalized on the grid first, so identical curves give exactly 0.
inline double hellinger(const DensityCurve& p, const DensityCurve& q) {
  if (p.grid.size() != q.grid.size() || !p.grid.isApprox(q.grid, 1e-12))
    throw ConfigError("hellinger: densities are on different grids");
  const Vector pp = p.density.cwiseMax(0.0);
  const Vector qq = q.density.cwiseMax(0.0);
  const double mp = trapezoid(p.grid, pp);
  const double mq = trapezoid(p.grid, qq);
  if (!(mp > 0.0) || !(mq > 0.0)) throw DegenerateDataError("hellinger: density has zero mass");
  if (pp == qq) return 0.0;
  const Vector root = (pp.array() * qq.array()).sqrt().matrix();
  const double bc = trapezoid(p.grid, root) / std::sqrt(mp * mq);
  return std::sqrt(std::clamp(1.0 - bc, 0.0, 1.0));
}

/// ||surrogate - reference|| / ||reference|| over the shared lag window.
inline double relative_l2(const CorrelationCurve& ref, const CorrelationCurve& sur) {
  if (ref.values.size() != sur.values.size() || !ref.lag_time.isApprox(sur.lag_time, 1e-12))
    throw ConfigError("relative_l2: curves are on different lag grids");
  const double denom = ref.values.norm();
  if (!(denom > 0.0)) throw DegenerateDataError("relative_l2: reference curve is zero");
  return (sur.values - ref.values).norm() / denom;
}

struct Thresholds {
  double hellinger_max = 0.1;
  double acf_l2_max = 0.2;
  double ccf_l2_max = 0.2;
};

struct Comparison {
  double hellinger_X = 0.0;
  double hellinger_r = 0.0;
  double acf_X = 0.0;
  double acf_r = 0.0;
  double ccf_X = 0.0;
  double ccf_r = 0.0;
  /// Gated on the X statistics only.
  bool pass = false;
};

inline Comparison compare(const StatsReport& ref, const StatsReport& sur, const Thresholds& th = {}) {
  Comparison c;
  c.hellinger_X = hellinger(ref.pdf_X, sur.pdf_X);
  c.hellinger_r = hellinger(ref.pdf_r, sur.pdf_r);
  c.acf_X = relative_l2(ref.acf_X, sur.acf_X);
  c.acf_r = relative_l2(ref.acf_r, sur.acf_r);
  c.ccf_X = relative_l2(ref.ccf_X, sur.ccf_X);
  c.ccf_r = relative_l2(ref.ccf_r, sur.ccf_r);
  c.pass = c.hellinger_X <= th.hellinger_max && c.acf_X <= th.acf_l2_max && c.ccf_X <= th.ccf_l2_max;
  return c;
}

inline void to_json(json& j, const Thresholds& t) {
  j = json{{"hellinger_max", t.hellinger_max}, {"acf_l2_max", t.acf_l2_max}, {"ccf_l2_max", t.ccf_l2_max}};
}

inline void from_json(const json& j, Thresholds& t) {
  Thresholds d;
  t.hellinger_max = j.value("hellinger_max", d.hellinger_max);
  t.acf_l2_max = j.value("acf_l2_max", d.acf_l2_max);
  t.ccf_l2_max = j.value("ccf_l2_max", d.ccf_l2_max);
}

inline void to_json(json& j, const Comparison& c) {
  j = json{{"hellinger_pdf_X", c.hellinger_X}, {"hellinger_pdf_r", c.hellinger_r}, {"rel_l2_acf_X", c.acf_X},
           {"rel_l2_acf_r", c.acf_r},          {"rel_l2_ccf_X", c.ccf_X},           {"rel_l2_ccf_r", c.ccf_r},
           {"pass", c.pass}};
}

namespace detail {

inline std::vector<double> as_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

} // namespace detail

inline void to_json(json& j, const DensityCurve& c) {
  j = json{{"grid", detail::as_vec(c.grid)}, {"density", detail::as_vec(c.density)}, {"bandwidth", c.bandwidth}};
}

inline void to_json(json& j, const CorrelationCurve& c) {
  j = json{{"lag_time", detail::as_vec(c.lag_time)}, {"values", detail::as_vec(c.values)}};
}

inline void to_json(json& j, const StatsReport& r) {
  j = json{{"pdf_X", r.pdf_X}, {"pdf_r", r.pdf_r}, {"acf_X", r.acf_X}, {"acf_r", r.acf_r},
           {"ccf_X", r.ccf_X}, {"ccf_r", r.ccf_r}, {"misclassification", r.misclassification}};
}

/// Three-column CSV for external plotting: grid, reference, surrogate.
inline std::string curves_csv(const std::string& grid_name, const Vector& grid, const Vector& ref, const Vector& sur) {
  std::string out = grid_name + ",reference,surrogate\n";
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    append_double(out, grid[i]);
    out += ',';
    append_double(out, ref[i]);
    out += ',';
    append_double(out, sur[i]);
    out += '\n';
  }
  return out;
}

} // namespace qsn
