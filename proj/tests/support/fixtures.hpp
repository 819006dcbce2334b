#pragma once

// Small, fast configurations shared by the pipeline tests.

#include "qsn/qsn.hpp"

namespace fixture {

/// Eight-site system, short trajectory, tiny network.
inline qsn::ExperimentConfig small_config() {
  qsn::ExperimentConfig c;
  c.name = "small";
  c.seed = 17;
  c.l96.N = 8;
  c.l96.L = 8;
  c.t_end = 20.0;
  c.burn_in = 2.0;
  c.features.x_lags = {0, 3};
  c.bins = 5;
  c.hidden = {16};
  c.train.iterations = 300;
  c.train.batch_size = 32;
  c.train.seed = c.train_seed();
  c.simulate.t_start = 0.0;
  c.simulate.t_end = 20.0;
  c.simulate.dt = c.l96.dt;
  c.stats.max_lag_time = 1.0;
  return c;
}

struct SmallRun {
  qsn::ExperimentConfig cfg;
  qsn::Trajectory reference;
  qsn::TrainedArtifacts trained;
};

inline SmallRun small_run(qsn::ExperimentConfig cfg = small_config()) {
  SmallRun r{cfg, qsn::run_generate(cfg), {}};
  r.trained = qsn::run_train(cfg, r.reference);
  return r;
}

} // namespace fixture
