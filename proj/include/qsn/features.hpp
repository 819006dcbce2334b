#pragma once

// Lagged feature vectors, standardization, and per-site quantile binning of
// the subgrid tendency.

#include "qsn/common.hpp"
#include "qsn/io.hpp"
#include "qsn/l96.hpp"
#include "qsn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace qsn {

enum class Locality { full_vector, local };

inline std::string to_string(Locality l) { return l == Locality::local ? "local" : "full_vector"; }

inline Locality locality_from_string(const std::string& s) {
  if (s == "local") return Locality::local;
  if (s == "full_vector" || s == "full") return Locality::full_vector;
  throw ConfigError("unknown locality '" + s + "' (expected full_vector or local)");
}

/// Which time lags of X (and optionally r) make up a feature vector.
struct FeatureSpec {
  std::vector<int> x_lags{0};
  std::vector<int> r_lags{};
  Locality locality = Locality::full_vector;

  void validate() const {
    auto check = [](const std::vector<int>& lags, const char* name) {
      for (std::size_t i = 0; i < lags.size(); ++i) {
        if (lags[i] < 0) throw ConfigError(std::string("FeatureSpec: negative lag in ") + name);
        if (i > 0 && lags[i] <= lags[i - 1])
          throw ConfigError(std::string("FeatureSpec: ") + name + " must be strictly ascending");
      }
    };
    check(x_lags, "x_lags");
    check(r_lags, "r_lags");
    if (x_lags.empty() && r_lags.empty()) throw ConfigError("FeatureSpec: no lags given");
  }

  int max_lag() const {
    int m = 0;
    if (!x_lags.empty()) m = std::max(m, x_lags.back());
    if (!r_lags.empty()) m = std::max(m, r_lags.back());
    return m;
  }

  int lags_per_site() const { return static_cast<int>(x_lags.size() + r_lags.size()); }
  int feature_dim(int sites) const { return locality == Locality::local ? lags_per_site() : sites * lags_per_site(); }
  int heads(int sites) const { return locality == Locality::local ? 1 : sites; }

  /// x_lags = {0, 1, ..., count - 1}
  static FeatureSpec consecutive(int count, Locality loc = Locality::full_vector) {
    FeatureSpec s;
    s.x_lags.resize(static_cast<std::size_t>(count));
    std::iota(s.x_lags.begin(), s.x_lags.end(), 0);
    s.locality = loc;
    return s;
  }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

inline void to_json(json& j, const FeatureSpec& s) {
  j = json{{"x_lags", s.x_lags}, {"r_lags", s.r_lags}, {"locality", to_string(s.locality)}};
}

inline void from_json(const json& j, FeatureSpec& s) {
  s.x_lags = j.value("x_lags", std::vector<int>{0});
  s.r_lags = j.value("r_lags", std::vector<int>{});
  s.locality = locality_from_string(j.value("locality", std::string("full_vector")));
}

/// Writes one feature vector into `out`. `site` selects the site for local
/// features and is ignored for full-vector features. Layout: blocks of X lags
/// in ascending order, then blocks of r lags; each full-vector block holds
/// all N sites.
template <class XRows, class RRows>
void fill_feature_row(const FeatureSpec& spec, const XRows& x_at, const RRows& r_at, int sites, int site,
                      std::span<double> out) {
  std::size_t k = 0;
  auto emit = [&](const auto& row) {
    if (spec.locality == Locality::local) {
      out[k++] = row[site];
    } else {
      for (int n = 0; n < sites; ++n) out[k++] = row[n];
    }
  };
  for (int lag : spec.x_lags) emit(x_at(lag));
  for (int lag : spec.r_lags) emit(r_at(lag));
}

/// Design matrix with aligned targets. Row i pairs the features at time
/// index `time_index[i]` with targets r at the following step.
struct FeatureMatrix {
  RowMatrix features;
  /// Raw target values, rows x heads.
  RowMatrix targets;
  /// Bin label per row and head; empty until labels are assigned.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;
  std::vector<Eigen::Index> time_index;
  /// Site of each row in local mode, -1 for full-vector rows.
  std::vector<int> site;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }
  int heads() const { return static_cast<int>(targets.cols()); }
  bool labelled() const { return labels.rows() == features.rows() && labels.cols() == targets.cols(); }
};

inline Eigen::Index min_trajectory_rows(const FeatureSpec& spec) { return spec.max_lag() + 3; }

inline FeatureMatrix build_features(const Trajectory& traj, const FeatureSpec& spec) {
  spec.validate();
  traj.check();
  const Eigen::Index required = min_trajectory_rows(spec);
  if (traj.rows() < required)
    throw ConfigError("build_features: trajectory has " + std::to_string(traj.rows()) + " rows, needs at least " +
                      std::to_string(required) + " for max lag " + std::to_string(spec.max_lag()));

  const int N = traj.sites();
  const Eigen::Index J = spec.max_lag();
  const Eigen::Index last = traj.rows() - 1; // T
  const Eigen::Index times = last - J;      // j = J .. T-1
  const bool local = spec.locality == Locality::local;
  const Eigen::Index rows = local ? times * N : times;
  const int heads = spec.heads(N);

  FeatureMatrix fm;
  fm.features.resize(rows, spec.feature_dim(N));
  fm.targets.resize(rows, heads);
  fm.time_index.resize(static_cast<std::size_t>(rows));
  fm.site.resize(static_cast<std::size_t>(rows), -1);

  Eigen::Index i = 0;
  for (Eigen::Index j = J; j < last; ++j) {
    auto x_at = [&](int lag) { return traj.X.row(j - lag); };
    auto r_at = [&](int lag) { return traj.r.row(j - lag); };
    const int site_count = local ? N : 1;
    for (int n = 0; n < site_count; ++n, ++i) {
      fill_feature_row(spec, x_at, r_at, N, n, std::span<double>(fm.features.row(i).data(), fm.dim()));
      if (local) {
        fm.targets(i, 0) = traj.r(j + 1, n);
        fm.site[static_cast<std::size_t>(i)] = n;
      } else {
        fm.targets.row(i) = traj.r.row(j + 1);
      }
      fm.time_index[static_cast<std::size_t>(i)] = j;
    }
  }
  return fm;
}

/// Per-column affine map to zero mean, unit (population) standard deviation.
struct StandardScaler {
  Vector mean;
  Vector std;

  static StandardScaler fit(const RowMatrix& features) {
    if (features.rows() < 2) throw ConfigError("StandardScaler::fit: need at least 2 rows");
    StandardScaler s;
    const double n = static_cast<double>(features.rows());
    s.mean = features.colwise().sum().transpose() / n;
    Eigen::ArrayXd sumsq = Eigen::ArrayXd::Zero(features.cols());
    for (Eigen::Index i = 0; i < features.rows(); ++i)
      sumsq += (features.row(i).transpose() - s.mean).array().square();
    s.std = (sumsq / n).sqrt().matrix();
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      if (!(s.std[c] > 1e-12 * std::max(1.0, std::abs(s.mean[c]))))
        throw DegenerateDataError("StandardScaler::fit: feature column " + std::to_string(c) + " is constant");
    return s;
  }

  void apply(RowMatrix& features) const {
    check_dim(features.cols());
    for (Eigen::Index i = 0; i < features.rows(); ++i)
      features.row(i) = (features.row(i) - mean.transpose()).cwiseQuotient(std.transpose());
  }

  void apply_row(std::span<double> row) const {
    check_dim(static_cast<Eigen::Index>(row.size()));
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto k = static_cast<Eigen::Index>(c);
      row[c] = (row[c] - mean[k]) / std[k];
    }
  }

  Eigen::Index dim() const { return mean.size(); }

  void check_dim(Eigen::Index d) const {
    if (d != mean.size())
      throw ConfigError("StandardScaler: feature dimension " + std::to_string(d) + " does not match fitted " +
                        std::to_string(mean.size()));
  }
};

inline void to_json(json& j, const StandardScaler& s) {
  j = json{{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
           {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

inline void from_json(const json& j, StandardScaler& s) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto d = j.at("std").get<std::vector<double>>();
  if (m.size() != d.size()) throw ConfigError("scaler JSON: mean and std lengths differ");
  s.mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.std = Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size()));
  for (double v : d)
    if (!(v > 0.0)) throw ConfigError("scaler JSON: non-positive std");
}

/// Partition of one output component into M intervals, with the training
/// samples that fall into each.
struct HeadBins {
  /// M + 1 ascending edges; the outer two are the observed extremes.
  std::vector<double> edges;
  /// Training target values; members index into this.
  std::vector<double> values;
  std::vector<std::vector<std::size_t>> members;
  std::vector<double> bin_mean;

  int bins() const { return static_cast<int>(edges.size()) - 1; }

  /// Half-open [e_m, e_{m+1}); out-of-range values clamp to the edge bins.
  int index(double value) const {
    const auto first = edges.begin() + 1;
    const auto last = edges.end() - 1;
    return static_cast<int>(std::upper_bound(first, last, value) - first);
  }
};

struct BinningScheme {
  std::vector<HeadBins> heads;

  int head_count() const { return static_cast<int>(heads.size()); }
  int bins() const { return heads.empty() ? 0 : heads.front().bins(); }
};

inline int bin_index(const BinningScheme& scheme, int head, double value) {
  return scheme.heads.at(static_cast<std::size_t>(head)).index(value);
}

namespace detail {

inline void populate_members(HeadBins& hb) {
  const int M = hb.bins();
  hb.members.assign(static_cast<std::size_t>(M), {});
  for (std::size_t i = 0; i < hb.values.size(); ++i)
    hb.members[static_cast<std::size_t>(hb.index(hb.values[i]))].push_back(i);
  hb.bin_mean.assign(static_cast<std::size_t>(M), 0.0);
  for (int m = 0; m < M; ++m) {
    const auto& mem = hb.members[static_cast<std::size_t>(m)];
    if (mem.empty()) continue;
    double s = 0.0;
    for (auto i : mem) s += hb.values[i];
    hb.bin_mean[static_cast<std::size_t>(m)] = s / static_cast<double>(mem.size());
  }
}

} // namespace detail

enum class BinMethod { quantile, equal_width };

inline std::string to_string(BinMethod b) { return b == BinMethod::equal_width ? "equal_width" : "quantile"; }

inline BinMethod bin_method_from_string(const std::string& s) {
  if (s == "quantile") return BinMethod::quantile;
  if (s == "equal_width") return BinMethod::equal_width;
  throw ConfigError("unknown bin method '" + s + "' (expected quantile or equal_width)");
}

/// M bins per column of `targets`: equal-count (default) or equal-width
/// between the observed extremes. Every bin must end up non-empty.
inline BinningScheme fit_bins(const RowMatrix& targets, int M, BinMethod method = BinMethod::quantile) {
  if (M < 2) throw ConfigError("fit_bins: M must be >= 2");
  BinningScheme scheme;
  for (Eigen::Index h = 0; h < targets.cols(); ++h) {
    HeadBins hb;
    hb.values.resize(static_cast<std::size_t>(targets.rows()));
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      hb.values[static_cast<std::size_t>(i)] = targets(i, h);
      if (!std::isfinite(targets(i, h))) throw NumericError("fit_bins: non-finite target");
    }
    std::vector<double> sorted = hb.values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    hb.edges.resize(static_cast<std::size_t>(M) + 1);
    hb.edges.front() = sorted.front();
    hb.edges.back() = sorted.back();
    for (std::size_t k = 1; k < static_cast<std::size_t>(M); ++k) {
      if (method == BinMethod::equal_width) {
        hb.edges[k] = sorted.front() + (sorted.back() - sorted.front()) * static_cast<double>(k) / M;
        continue;
      }
      double e = sorted[k * n / static_cast<std::size_t>(M)];
      const double prev = hb.edges[k - 1];
      if (e <= prev) {
        // ties: step to the next value strictly above the previous edge
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), prev);
        if (it != sorted.end()) e = *it;
      }
      hb.edges[k] = e;
    }
    detail::populate_members(hb);
    for (int m = 0; m < M; ++m)
      if (hb.members[static_cast<std::size_t>(m)].empty())
        throw DegenerateDataError("fit_bins: head " + std::to_string(h) + " leaves bin " + std::to_string(m) +
                                  " empty with " + std::to_string(M) + " " + to_string(method) + " bins");
    scheme.heads.push_back(std::move(hb));
  }
  return scheme;
}

inline void assign_labels(FeatureMatrix& fm, const BinningScheme& scheme) {
  if (scheme.head_count() != fm.heads()) throw ConfigError("assign_labels: head count mismatch");
  fm.labels.resize(fm.rows(), fm.heads());
  for (Eigen::Index i = 0; i < fm.rows(); ++i)
    for (int h = 0; h < fm.heads(); ++h) fm.labels(i, h) = bin_index(scheme, h, fm.targets(i, h));
}

inline void to_json(json& j, const BinningScheme& s) {
  j = json::object();
  j["M"] = s.bins();
  j["heads"] = json::array();
  for (const auto& hb : s.heads)
    j["heads"].push_back(json{{"edges", hb.edges}, {"values", hb.values}, {"members", hb.members}});
}

inline void from_json(const json& j, BinningScheme& s) {
  s.heads.clear();
  const int M = j.at("M").get<int>();
  for (const auto& jh : j.at("heads")) {
    HeadBins hb;
    hb.edges = jh.at("edges").get<std::vector<double>>();
    hb.values = jh.at("values").get<std::vector<double>>();
    if (hb.bins() != M) throw ConfigError("bins JSON: edge count does not match M");
    if (!std::is_sorted(hb.edges.begin(), hb.edges.end())) throw ConfigError("bins JSON: edges not ascending");
    detail::populate_members(hb);
    const auto stored = jh.at("members").get<std::vector<std::vector<std::size_t>>>();
    if (stored != hb.members) throw ConfigError("bins JSON: member lists disagree with edges and values");
    s.heads.push_back(std::move(hb));
  }
}

} // namespace qsn
