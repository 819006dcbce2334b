#pragma once

// Turns predicted bin pmfs into subgrid tendencies by resampling training data:
// draw a bin from the pmf, then draw one of the bin's members uniformly.

#include "qsn/common.hpp"
#include "qsn/features.hpp"
#include "qsn/network.hpp"
#include "qsn/rng.hpp"

#include <cmath>
#include <random>
#include <span>
#include <string>

namespace qsn {

enum class SamplerMode { stochastic, deterministic };

inline std::string to_string(SamplerMode m) { return m == SamplerMode::deterministic ? "deterministic" : "stochastic"; }

inline SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "stochastic") return SamplerMode::stochastic;
  if (s == "deterministic") return SamplerMode::deterministic;
  throw ConfigError("unknown sampler mode '" + s + "' (expected stochastic or deterministic)");
}

template <class Derived>
int sample_bin(const Eigen::DenseBase<Derived>& pmf, RandomEngine& rng) {
  const double total = pmf.sum();
  if (!(std::abs(total - 1.0) <= 1e-9))
    throw NumericError("sample_bin: pmf sums to " + std::to_string(total) + ", not 1");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double cum = 0.0;
  int last_positive = 0;
  for (Eigen::Index m = 0; m < pmf.size(); ++m) {
    if (pmf(m) <= 0.0) continue;
    cum += pmf(m);
    last_positive = static_cast<int>(m);
    if (u < cum) return last_positive;
  }
  // u landed in the rounding gap above the accumulated sum
  return last_positive;
}

inline double sample_from_bin(const HeadBins& head, int m, RandomEngine& rng) {
  if (m < 0 || m >= head.bins()) throw ConfigError("sample_from_bin: bin index out of range");
  const auto& members = head.members[static_cast<std::size_t>(m)];
  if (members.empty()) throw ConfigError("sample_from_bin: bin " + std::to_string(m) + " is empty");
  std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
  return head.values[members[pick(rng)]];
}

inline double sample_from_bin(const BinningScheme& scheme, int head, int m, RandomEngine& rng) {
  return sample_from_bin(scheme.heads.at(static_cast<std::size_t>(head)), m, rng);
}

/// One subgrid value for a single head: categorical bin + uniform member in
/// stochastic mode, argmax bin's training mean in deterministic mode.
template <class Derived>
double draw_from_pmf(const HeadBins& head, const Eigen::DenseBase<Derived>& pmf, SamplerMode mode, RandomEngine* rng) {
  if (pmf.size() != head.bins()) throw ConfigError("draw_from_pmf: pmf length does not match bin count");
  if (mode == SamplerMode::deterministic) return head.bin_mean[static_cast<std::size_t>(argmax(pmf))];
  if (rng == nullptr) throw ConfigError("draw_from_pmf: stochastic mode needs a random stream");
  return sample_from_bin(head, sample_bin(pmf, *rng), *rng);
}

/// Samples every head of `net` independently, head h using streams[h].
/// `d` must already be standardized. Streams may be empty in deterministic mode.
inline Vector sample_r(const QSNetwork& net, const BinningScheme& scheme, const Vector& d, SamplerMode mode,
                       std::span<RandomEngine> streams) {
  if (scheme.head_count() != net.arch.heads) throw ConfigError("sample_r: scheme and network head counts differ");
  if (mode == SamplerMode::stochastic && static_cast<int>(streams.size()) < net.arch.heads)
    throw ConfigError("sample_r: need one random stream per head");
  const HeadPmf pmf = predict(net, d);
  Vector out(pmf.heads());
  for (int h = 0; h < pmf.heads(); ++h)
    out[h] = draw_from_pmf(scheme.heads[static_cast<std::size_t>(h)], pmf.head(h), mode,
                           mode == SamplerMode::stochastic ? &streams[static_cast<std::size_t>(h)] : nullptr);
  return out;
}

} // namespace qsn
