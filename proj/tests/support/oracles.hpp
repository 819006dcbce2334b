#pragma once

// Independent reference implementations used only by the tests. They are
// written for clarity, not speed, and share no code paths with the library.

#include "qsn/qsn.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

/// Wrap an integer index into [0, n) by explicit branching.
inline int wrap(int i, int n) {
  while (i < 0) i += n;
  while (i >= n) i -= n;
  return i;
}

/// Macro tendency with neighbour tables built up front.
inline std::vector<double> rhs_macro(const std::vector<double>& X, const std::vector<double>& r, double F, int sign) {
  const int N = static_cast<int>(X.size());
  std::vector<int> prev1(N), next1(N), prev2(N);
  for (int n = 0; n < N; ++n) {
    prev1[n] = n == 0 ? N - 1 : n - 1;
    next1[n] = n == N - 1 ? 0 : n + 1;
    prev2[n] = n == 0 ? N - 2 : (n == 1 ? N - 1 : n - 2);
  }
  std::vector<double> out(N);
  for (int n = 0; n < N; ++n) out[n] = X[prev1[n]] * (X[next1[n]] - X[prev2[n]]) - X[n] + sign * F + r[n];
  return out;
}

/// Micro tendency on a 2-D (l, n) grid with the boundary rule
/// Y_{l+L,n} = Y_{l,n+1} applied literally, one index at a time.
inline std::vector<std::vector<double>> rhs_micro(const std::vector<double>& X,
                                                  const std::vector<std::vector<double>>& Y, // Y[n][l]
                                                  double h_y, double eps) {
  const int N = static_cast<int>(Y.size());
  const int L = static_cast<int>(Y[0].size());
  auto at = [&](int l, int n) {
    while (l >= L) {
      l -= L;
      n += 1;
    }
    while (l < 0) {
      l += L;
      n -= 1;
    }
    return Y[wrap(n, N)][l];
  };
  std::vector<std::vector<double>> out(N, std::vector<double>(L));
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l)
      out[n][l] = (at(l + 1, n) * (at(l - 1, n) - at(l + 2, n)) - at(l, n) + h_y * X[n]) / eps;
  return out;
}

inline std::vector<double> coupling_r(const std::vector<std::vector<double>>& Y, double h_x) {
  std::vector<double> r;
  for (const auto& site : Y) {
    double s = 0.0;
    for (double y : site) s += y;
    r.push_back(h_x * s / static_cast<double>(site.size()));
  }
  return r;
}

/// Weighted single-stage resampling distribution over training values:
/// w_i = sum_m |B_m|^-1 rho_m 1(r_i in B_m), located by linear scan.
inline std::vector<double> single_stage_weights(const std::vector<double>& values, const std::vector<double>& edges,
                                                const std::vector<double>& pmf) {
  const int M = static_cast<int>(edges.size()) - 1;
  std::vector<int> bin(values.size());
  std::vector<int> count(M, 0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    int m = 0;
    while (m < M - 1 && values[i] >= edges[m + 1]) ++m;
    bin[i] = m;
    ++count[m];
  }
  std::vector<double> w(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) w[i] = pmf[bin[i]] / count[bin[i]];
  return w;
}

/// Two-point central difference of the batch loss with respect to one weight.
inline double central_partial(qsn::QSNetwork net, std::size_t layer, bool bias, Eigen::Index r, Eigen::Index c,
                              const qsn::Matrix& input, const qsn::LabelBatch& labels, double h = 1e-6) {
  double& w = bias ? net.layers[layer].b[r] : net.layers[layer].W(r, c);
  const double w0 = w;
  w = w0 + h;
  const double up = qsn::loss(net, input, labels);
  w = w0 - h;
  const double down = qsn::loss(net, input, labels);
  w = w0;
  return (up - down) / (2.0 * h);
}

/// Sign pattern of every hidden pre-activation, flattened.
inline std::vector<char> kink_pattern(const qsn::QSNetwork& net, const qsn::Matrix& input) {
  qsn::ForwardCache cache;
  qsn::forward(net, input, cache);
  std::vector<char> out;
  for (const auto& z : cache.preactivations)
    for (Eigen::Index i = 0; i < z.size(); ++i) out.push_back(z.data()[i] > 0.0);
  return out;
}

/// Five-point finite-difference derivative of the batch loss with respect to
/// one weight. The step starts at h and is shrunk until no leaky-ReLU unit
/// changes side inside the stencil; NaN if the weight sits on a kink even
/// at the smallest step.
inline double numeric_partial(qsn::QSNetwork net, std::size_t layer, bool bias, Eigen::Index r, Eigen::Index c,
                              const qsn::Matrix& input, const qsn::LabelBatch& labels, double h = 1e-4) {
  double& w = bias ? net.layers[layer].b[r] : net.layers[layer].W(r, c);
  const double w0 = w;
  const auto base = kink_pattern(net, input);
  auto smooth_within = [&](double step) {
    for (double dw : {-2 * step, 2 * step}) {
      w = w0 + dw;
      const bool same = kink_pattern(net, input) == base;
      w = w0;
      if (!same) return false;
    }
    return true;
  };
  while (!smooth_within(h)) {
    h /= 10.0;
    if (h < 1e-8) return std::numeric_limits<double>::quiet_NaN();
  }
  auto at = [&](double dw) {
    w = w0 + dw;
    return qsn::loss(net, input, labels);
  };
  const double d = (-at(2 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2 * h)) / (12.0 * h);
  w = w0;
  return d;
}

/// Loss by direct formula, one head at a time, from raw logits.
inline double cross_entropy_direct(const std::vector<double>& logits, const std::vector<int>& labels, int bins) {
  double total = 0.0;
  for (std::size_t h = 0; h < labels.size(); ++h) {
    double z = 0.0;
    for (int m = 0; m < bins; ++m) z += std::exp(logits[h * bins + m]);
    total -= logits[h * bins + labels[h]] - std::log(z);
  }
  return total;
}

inline double normal_pdf(double x, double mu = 0.0, double sigma = 1.0) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// Hellinger distance between N(0,1) and N(delta,1) in closed form.
inline double hellinger_shifted_normals(double delta) { return std::sqrt(1.0 - std::exp(-delta * delta / 8.0)); }

/// Total variation between two discrete distributions given as weight maps.
inline double total_variation(const std::map<double, double>& p, const std::map<double, double>& q) {
  std::map<double, double> diff = p;
  for (const auto& [k, v] : q) diff[k] -= v;
  double tv = 0.0;
  for (const auto& [k, v] : diff) tv += std::abs(v);
  return 0.5 * tv;
}

/// Direct O(n * lag) autocorrelation with the biased (1/n) estimator.
inline std::vector<double> acf_direct(const std::vector<double>& x, int max_lag) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  std::vector<double> out;
  for (int k = 0; k <= max_lag; ++k) {
    double c = 0.0;
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) < n; ++i) c += (x[i] - mean) * (x[i + k] - mean);
    out.push_back(c / c0);
  }
  return out;
}

/// Small synthetic trajectory with arbitrary values (not L96 dynamics).
inline qsn::Trajectory ramp_trajectory(int rows, int sites, double dt = 0.01) {
  qsn::Trajectory t;
  t.times.resize(rows);
  t.X.resize(rows, sites);
  t.r.resize(rows, sites);
  for (int j = 0; j < rows; ++j) {
    t.times[j] = j * dt;
    for (int n = 0; n < sites; ++n) {
      t.X(j, n) = 1000.0 * j + n;
      t.r(j, n) = -(1000.0 * j + n);
    }
  }
  return t;
}

} // namespace oracle
