#pragma once

// Quantized softmax network: a feed-forward net whose output layer is split
// into `heads` independent softmax groups of `bins` logits each. Trained with
// summed per-head cross-entropy and RMSProp.

#include "qsn/common.hpp"
#include "qsn/features.hpp"
#include "qsn/io.hpp"
#include "qsn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace qsn {

struct QSNArchitecture {
  int input_dim = 1;
  std::vector<int> hidden{256, 256, 256};
  double leaky_slope = 0.01;
  int heads = 1;
  int bins = 10;

  int output_dim() const { return heads * bins; }

  void validate() const {
    if (input_dim < 1) throw ConfigError("QSNArchitecture: input_dim must be >= 1");
    for (int w : hidden)
      if (w < 1) throw ConfigError("QSNArchitecture: hidden widths must be >= 1");
    if (heads < 1) throw ConfigError("QSNArchitecture: heads must be >= 1");
    if (bins < 2) throw ConfigError("QSNArchitecture: bins must be >= 2");
    if (!(leaky_slope >= 0.0) || !std::isfinite(leaky_slope)) throw ConfigError("QSNArchitecture: bad leaky slope");
  }

  /// Widths from input to output.
  std::vector<int> widths() const {
    std::vector<int> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output_dim());
    return w;
  }

  friend bool operator==(const QSNArchitecture&, const QSNArchitecture&) = default;
};

inline void to_json(json& j, const QSNArchitecture& a) {
  j = json{{"input_dim", a.input_dim}, {"hidden", a.hidden}, {"leaky_slope", a.leaky_slope},
           {"heads", a.heads},         {"bins", a.bins}};
}

inline void from_json(const json& j, QSNArchitecture& a) {
  QSNArchitecture d;
  a.input_dim = j.value("input_dim", d.input_dim);
  a.hidden = j.value("hidden", d.hidden);
  a.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  a.heads = j.value("heads", d.heads);
  a.bins = j.value("bins", d.bins);
}

/// Dense layer, out = W * in + b. W is (out x in).
struct DenseLayer {
  Matrix W;
  Vector b;
};

struct QSNetwork {
  QSNArchitecture arch;
  std::vector<DenseLayer> layers;
  std::uint64_t init_seed = 0;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
  }
};

enum class WeightInit { scaled_uniform, zeros };

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn layer by layer in
/// row-major order; biases zero.
inline QSNetwork init_network(const QSNArchitecture& arch, std::uint64_t seed,
                              WeightInit init = WeightInit::scaled_uniform) {
  arch.validate();
  QSNetwork net;
  net.arch = arch;
  net.init_seed = seed;
  RandomEngine rng(seed);
  const auto w = arch.widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    DenseLayer layer{Matrix::Zero(w[l + 1], w[l]), Vector::Zero(w[l + 1])};
    if (init == WeightInit::scaled_uniform) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = dist(rng);
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

/// Intermediate values of a batched forward pass; columns are samples.
struct ForwardCache {
  /// activations[0] is the input, activations[l] the output of hidden layer l.
  std::vector<Matrix> activations;
  /// Pre-activation of each hidden layer.
  std::vector<Matrix> preactivations;
  Matrix logits;
  Matrix pmf;
};

namespace detail {

/// Max-subtracted softmax over each contiguous group of `bins` rows.
inline void grouped_softmax(const Matrix& logits, int bins, Matrix& pmf) {
  pmf.resize(logits.rows(), logits.cols());
  const Eigen::Index heads = logits.rows() / bins;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto z = logits.col(c).segment(h * bins, bins);
      auto p = pmf.col(c).segment(h * bins, bins);
      p = (z.array() - z.maxCoeff()).exp().matrix();
      p /= p.sum();
    }
  }
}

inline void leaky_relu(const Matrix& z, double slope, Matrix& a) {
  a = (z.array() > 0.0).select(z, slope * z);
}

} // namespace detail

/// Forward pass over a batch (input_dim x B).
inline void forward(const QSNetwork& net, const Matrix& input, ForwardCache& cache) {
  if (input.rows() != net.arch.input_dim)
    throw ConfigError("forward: input has dimension " + std::to_string(input.rows()) + ", network expects " +
                      std::to_string(net.arch.input_dim));
  const std::size_t L = net.layers.size();
  cache.activations.resize(L);
  cache.preactivations.resize(L - 1);
  cache.activations[0] = input;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    Matrix& z = cache.preactivations[l];
    z.noalias() = net.layers[l].W * cache.activations[l];
    z.colwise() += net.layers[l].b;
    detail::leaky_relu(z, net.arch.leaky_slope, cache.activations[l + 1]);
    if (!cache.activations[l + 1].allFinite())
      throw NumericError("forward: non-finite activation in layer " + std::to_string(l));
  }
  cache.logits.noalias() = net.layers.back().W * cache.activations[L - 1];
  cache.logits.colwise() += net.layers.back().b;
  if (!cache.logits.allFinite()) throw NumericError("forward: non-finite activation in layer " + std::to_string(L - 1));
  detail::grouped_softmax(cache.logits, net.arch.bins, cache.pmf);
}

/// Per-head pmfs for one feature vector: (bins x heads), column h is head h.
struct HeadPmf {
  Matrix probs;
  Vector logits;

  int heads() const { return static_cast<int>(probs.cols()); }
  int bins() const { return static_cast<int>(probs.rows()); }
  auto head(int h) const { return probs.col(h); }
};

inline HeadPmf predict(const QSNetwork& net, const Vector& d) {
  ForwardCache cache;
  forward(net, d, cache);
  HeadPmf out;
  out.logits = cache.logits.col(0);
  out.probs = Eigen::Map<const Matrix>(cache.pmf.data(), net.arch.bins, net.arch.heads);
  return out;
}

/// Mean over batch columns of -sum_h log p_h[label_h]; probabilities are
/// floored at `floor` inside the log.
template <class LabelMatrix>
double cross_entropy(const Matrix& pmf, const LabelMatrix& labels, int bins, double floor = 1e-12) {
  const Eigen::Index B = pmf.cols();
  const Eigen::Index heads = pmf.rows() / bins;
  double total = 0.0;
  for (Eigen::Index c = 0; c < B; ++c)
    for (Eigen::Index h = 0; h < heads; ++h) total -= std::log(std::max(pmf(h * bins + labels(h, c), c), floor));
  return total / static_cast<double>(B);
}

/// Column-per-sample label matrix (heads x B).
using LabelBatch = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

inline double loss(const QSNetwork& net, const Matrix& input, const LabelBatch& labels) {
  ForwardCache cache;
  forward(net, input, cache);
  return cross_entropy(cache.pmf, labels, net.arch.bins);
}

using Gradients = std::vector<DenseLayer>;

/// Gradients of the batch-mean loss. Expects `cache` from forward() on the
/// same batch. The output-layer error is (pmf - one_hot) / B.
inline Gradients backward(const QSNetwork& net, const ForwardCache& cache, const LabelBatch& labels,
                          Matrix* output_error = nullptr) {
  const std::size_t L = net.layers.size();
  const Eigen::Index B = cache.pmf.cols();
  const int bins = net.arch.bins;
  Matrix delta = cache.pmf;
  for (Eigen::Index c = 0; c < B; ++c)
    for (Eigen::Index h = 0; h < labels.rows(); ++h) delta(h * bins + labels(h, c), c) -= 1.0;
  delta /= static_cast<double>(B);
  if (output_error) *output_error = delta;

  Gradients g(L);
  for (std::size_t k = L; k-- > 0;) {
    g[k].W.noalias() = delta * cache.activations[k].transpose();
    g[k].b = delta.rowwise().sum();
    if (k == 0) break;
    Matrix back = net.layers[k].W.transpose() * delta;
    const auto& z = cache.preactivations[k - 1];
    delta = (z.array() > 0.0).select(back, net.arch.leaky_slope * back);
  }
  return g;
}

struct TrainConfig {
  int iterations = 10000;
  double learning_rate = 1e-3;
  int batch_size = 64;
  double decay = 0.9;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (iterations < 1) throw ConfigError("TrainConfig: iterations must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch size must be >= 1");
    if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("TrainConfig: decay must be in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("TrainConfig: epsilon must be > 0");
  }
};

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"iterations", c.iterations}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
           {"decay", c.decay},           {"epsilon", c.epsilon},             {"seed", c.seed}};
}

inline void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.iterations = j.value("iterations", d.iterations);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.decay = j.value("decay", d.decay);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.seed = j.value("seed", d.seed);
}

/// Running mean of squared gradients, same shapes as the network.
struct RmsPropState {
  std::vector<DenseLayer> mean_square;

  static RmsPropState zeros_like(const QSNetwork& net) {
    RmsPropState s;
    for (const auto& l : net.layers) s.mean_square.push_back({Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size())});
    return s;
  }
};

inline void rmsprop_update(QSNetwork& net, const Gradients& grads, RmsPropState& state, const TrainConfig& cfg) {
  if (grads.size() != net.layers.size() || state.mean_square.size() != net.layers.size())
    throw ConfigError("rmsprop_update: gradient/state shape mismatch");
  const double g1 = cfg.decay;
  const double g2 = 1.0 - cfg.decay;
  auto step = [&](auto& w, const auto& g, auto& v) {
    v.array() = g1 * v.array() + g2 * g.array().square();
    w.array() -= cfg.learning_rate * g.array() / (v.array().sqrt() + cfg.epsilon);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    step(net.layers[l].W, grads[l].W, state.mean_square[l].W);
    step(net.layers[l].b, grads[l].b, state.mean_square[l].b);
  }
}

/// Gathers rows of a FeatureMatrix into a column-per-sample batch.
inline void gather_batch(const FeatureMatrix& fm, const std::vector<Eigen::Index>& rows, Matrix& input,
                         LabelBatch& labels) {
  const auto B = static_cast<Eigen::Index>(rows.size());
  input.resize(fm.dim(), B);
  labels.resize(fm.heads(), B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const Eigen::Index r = rows[static_cast<std::size_t>(c)];
    input.col(c) = fm.features.row(r).transpose();
    labels.col(c) = fm.labels.row(r).transpose();
  }
}

struct TrainResult {
  std::vector<double> loss_history;
};

using TrainProgress = std::function<void(int iteration, double loss)>;

/// Minibatch RMSProp on uniformly sampled (with replacement) rows. `fm` must be
/// standardized and labelled. Records the minibatch loss of every iteration.
inline TrainResult train(QSNetwork& net, const FeatureMatrix& fm, const TrainConfig& cfg,
                         const TrainProgress& progress = {}) {
  cfg.validate();
  if (!fm.labelled()) throw ConfigError("train: feature matrix has no bin labels");
  if (fm.dim() != net.arch.input_dim) throw ConfigError("train: feature dimension does not match network input");
  if (fm.heads() != net.arch.heads) throw ConfigError("train: head count does not match network");
  if (fm.rows() < 1) throw ConfigError("train: empty feature matrix");

  RandomEngine rng(cfg.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, fm.rows() - 1);
  RmsPropState state = RmsPropState::zeros_like(net);
  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.iterations));

  std::vector<Eigen::Index> rows(static_cast<std::size_t>(cfg.batch_size));
  Matrix input;
  LabelBatch labels;
  ForwardCache cache;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (auto& r : rows) r = pick(rng);
    gather_batch(fm, rows, input, labels);
    forward(net, input, cache);
    const double l = cross_entropy(cache.pmf, labels, net.arch.bins);
    if (!std::isfinite(l)) throw NumericError("train: loss diverged at iteration " + std::to_string(it));
    result.loss_history.push_back(l);
    rmsprop_update(net, backward(net, cache, labels), state, cfg);
    if (progress) progress(it, l);
  }
  return result;
}

/// Argmax with ties going to the lowest index.
template <class Derived>
int argmax(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

/// Fraction of rows whose argmax bin differs from the label, per head.
inline std::vector<double> misclassification_rate(const QSNetwork& net, const FeatureMatrix& fm,
                                                  Eigen::Index chunk = 2048) {
  if (!fm.labelled()) throw ConfigError("misclassification_rate: feature matrix has no bin labels");
  const int heads = fm.heads();
  const int bins = net.arch.bins;
  std::vector<double> wrong(static_cast<std::size_t>(heads), 0.0);
  ForwardCache cache;
  Matrix input;
  for (Eigen::Index start = 0; start < fm.rows(); start += chunk) {
    const Eigen::Index count = std::min(chunk, fm.rows() - start);
    input = fm.features.middleRows(start, count).transpose();
    forward(net, input, cache);
    for (Eigen::Index c = 0; c < count; ++c)
      for (int h = 0; h < heads; ++h)
        if (argmax(cache.pmf.col(c).segment(h * bins, bins)) != fm.labels(start + c, h))
          wrong[static_cast<std::size_t>(h)] += 1.0;
  }
  for (auto& w : wrong) w /= static_cast<double>(fm.rows());
  return wrong;
}

inline void to_json(json& j, const QSNetwork& net) {
  j = json::object();
  j["architecture"] = net.arch;
  j["init_seed"] = net.init_seed;
  j["layers"] = json::array();
  for (const auto& l : net.layers) {
    std::vector<double> w(static_cast<std::size_t>(l.W.size()));
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) w[static_cast<std::size_t>(r * l.W.cols() + c)] = l.W(r, c);
    j["layers"].push_back(json{{"rows", l.W.rows()},
                               {"cols", l.W.cols()},
                               {"weights", std::move(w)},
                               {"bias", std::vector<double>(l.b.data(), l.b.data() + l.b.size())}});
  }
}

inline void from_json(const json& j, QSNetwork& net) {
  net.arch = j.at("architecture").get<QSNArchitecture>();
  net.arch.validate();
  net.init_seed = j.value("init_seed", std::uint64_t{0});
  net.layers.clear();
  const auto widths = net.arch.widths();
  const auto& jl = j.at("layers");
  if (jl.size() + 1 != widths.size()) throw ConfigError("network JSON: layer count does not match architecture");
  for (std::size_t k = 0; k < jl.size(); ++k) {
    const auto rows = jl[k].at("rows").get<Eigen::Index>();
    const auto cols = jl[k].at("cols").get<Eigen::Index>();
    if (rows != widths[k + 1] || cols != widths[k]) throw ConfigError("network JSON: layer shape mismatch");
    const auto w = jl[k].at("weights").get<std::vector<double>>();
    const auto b = jl[k].at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
      throw ConfigError("network JSON: parameter count mismatch");
    DenseLayer layer{Matrix(rows, cols), Eigen::Map<const Vector>(b.data(), rows)};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) layer.W(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    net.layers.push_back(std::move(layer));
  }
}

} // namespace qsn
