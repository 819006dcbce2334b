#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qsn;

namespace {

FullState random_state(const L96Params& p, std::uint64_t seed) {
  RandomEngine rng(seed);
  std::normal_distribution<double> nd(0.0, 3.0);
  FullState s = FullState::zeros(p);
  for (Eigen::Index i = 0; i < s.X.size(); ++i) s.X[i] = nd(rng);
  for (Eigen::Index i = 0; i < s.Y.size(); ++i) s.Y[i] = nd(rng);
  return s;
}

std::vector<std::vector<double>> as_grid(const Vector& Y, int N, int L) {
  std::vector<std::vector<double>> g(N, std::vector<double>(L));
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l) g[n][l] = Y[n * L + l];
  return g;
}

} // namespace

TEST(L96Params, PresetsMatchPublishedSettings) {
  const auto u = L96Params::unimodal();
  EXPECT_EQ(u.N, 18);
  EXPECT_EQ(u.L, 20);
  EXPECT_DOUBLE_EQ(u.F, 10.0);
  EXPECT_DOUBLE_EQ(u.h_x, -1.0);
  EXPECT_DOUBLE_EQ(u.h_y, 1.0);
  EXPECT_DOUBLE_EQ(u.eps, 0.5);
  EXPECT_DOUBLE_EQ(u.dt, 0.01);
  EXPECT_DOUBLE_EQ(L96Params::bimodal().h_x, -2.0);
}

TEST(L96Params, RejectsInvalid) {
  L96Params p;
  p.N = 3;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.L = 2;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.eps = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.dt = -0.1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.forcing_sign = 0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(CouplingR, UniformMicroStateGivesHx) {
  L96Params p;
  const Vector r = coupling_r(Vector::Ones(p.N * p.L), p);
  for (Eigen::Index n = 0; n < r.size(); ++n) EXPECT_DOUBLE_EQ(r[n], p.h_x);
}

TEST(CouplingR, MatchesOracleAndRejectsBadInput) {
  L96Params p;
  p.h_x = -2.0;
  const FullState s = random_state(p, 5);
  const auto expect = oracle::coupling_r(as_grid(s.Y, p.N, p.L), p.h_x);
  const Vector r = coupling_r(s.Y, p);
  for (int n = 0; n < p.N; ++n) EXPECT_NEAR(r[n], expect[n], 1e-12);
  EXPECT_THROW(coupling_r(Vector::Ones(7), p), ConfigError);
  Vector bad = s.Y;
  bad[3] = std::nan("");
  EXPECT_THROW(coupling_r(bad, p), NumericError);
}

TEST(RhsMacro, ConstantForcingIsFixedPoint) {
  L96Params p;
  const Vector X = Vector::Constant(p.N, p.F);
  const Vector d = rhs_macro(X, Vector::Zero(p.N), p);
  EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RhsMacro, MatchesOracleForBothSigns) {
  for (int sign : {1, -1}) {
    L96Params p;
    p.forcing_sign = sign;
    for (int N : {4, 5, 18}) {
      p.N = N;
      const FullState s = random_state(p, 11 + static_cast<std::uint64_t>(N));
      const Vector r = Vector::LinSpaced(N, -1.0, 2.0);
      const Vector got = rhs_macro(s.X, r, p);
      const auto want = oracle::rhs_macro({s.X.data(), s.X.data() + N}, {r.data(), r.data() + N}, p.F, sign);
      for (int n = 0; n < N; ++n) EXPECT_NEAR(got[n], want[n], 1e-12) << "N=" << N << " n=" << n;
    }
  }
}

TEST(RhsMicro, ZeroStateHasZeroTendency) {
  L96Params p;
  const Vector d = rhs_micro(Vector::Zero(p.N), Vector::Zero(p.N * p.L), p);
  EXPECT_EQ(d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RhsMicro, MatchesOracleIncludingSiteWrap) {
  L96Params p;
  p.N = 5;
  p.L = 4;
  const FullState s = random_state(p, 23);
  const Vector got = rhs_micro(s.X, s.Y, p);
  const auto want = oracle::rhs_micro({s.X.data(), s.X.data() + p.N}, as_grid(s.Y, p.N, p.L), p.h_y, p.eps);
  for (int n = 0; n < p.N; ++n)
    for (int l = 0; l < p.L; ++l) EXPECT_NEAR(got[n * p.L + l], want[n][l], 1e-12);
}

TEST(Ab2, ConvergesAtSecondOrderOnDecay) {
  // dx/dt = -x, x(0) = 1, integrated to t = 1.
  auto integrate = [](double dt) {
    const int steps = static_cast<int>(std::llround(1.0 / dt));
    Vector x = Vector::Ones(1);
    std::optional<Vector> prev;
    for (int k = 0; k < steps; ++k) {
      Vector f = -x;
      x = ab2_combine<Vector>(x, f, prev ? &*prev : nullptr, dt);
      prev = f;
    }
    return std::abs(x[0] - std::exp(-1.0));
  };
  const double e1 = integrate(0.01);
  const double e2 = integrate(0.005);
  const double e3 = integrate(0.0025);
  const double order1 = std::log2(e1 / e2);
  const double order2 = std::log2(e2 / e3);
  EXPECT_GE(order1, 1.8);
  EXPECT_LE(order1, 2.2);
  EXPECT_GE(order2, 1.8);
  EXPECT_LE(order2, 2.2);
}

TEST(Ab2, FirstStepIsForwardEuler) {
  Vector s = Vector::Constant(2, 1.0);
  Vector f = Vector::Constant(2, 3.0);
  const Vector out = ab2_combine<Vector>(s, f, nullptr, 0.1);
  EXPECT_DOUBLE_EQ(out[0], 1.3);
  Vector prev = Vector::Constant(2, 1.0);
  const Vector out2 = ab2_combine<Vector>(s, f, &prev, 0.1);
  EXPECT_DOUBLE_EQ(out2[1], 1.0 + 0.1 * (4.5 - 0.5));
}

TEST(Ab2, BlowUpReportsStep) {
  L96Params p;
  p.dt = 10.0;
  FullState s = random_state(p, 3);
  std::optional<FullTendency> prev;
  bool thrown = false;
  try {
    for (std::size_t k = 0; k < 200; ++k) {
      auto res = ab2_step(s, prev, p, k);
      s = res.state;
      prev = res.tendency;
    }
  } catch (const BlowUpError& e) {
    thrown = true;
    EXPECT_GE(e.step(), 1u);
  }
  EXPECT_TRUE(thrown);
}

TEST(Generate, RowCountTimesAndDeterminism) {
  L96Params p;
  RandomEngine a(99), b(99);
  const Trajectory t1 = generate_trajectory(p, 1.0, 0.5, a);
  const Trajectory t2 = generate_trajectory(p, 1.0, 0.5, b);
  EXPECT_EQ(t1.rows(), 101);
  EXPECT_EQ(t1.sites(), 18);
  EXPECT_DOUBLE_EQ(t1.times[0], 0.0);
  EXPECT_NEAR(t1.times[100], 1.0, 1e-12);
  EXPECT_NEAR(t1.dt(), 0.01, 1e-15);
  EXPECT_TRUE(t1.X == t2.X);
  EXPECT_TRUE(t1.r == t2.r);
  EXPECT_NO_THROW(t1.check());
}

TEST(Generate, RecordedRIsCouplingOfMicroState) {
  // Reproduce the first recorded rows by stepping manually.
  L96Params p;
  RandomEngine rng(4);
  FullState init = random_initial_state(p, rng);
  EXPECT_TRUE(init.Y.isZero());
  const Trajectory t = generate_trajectory(p, 0.05, 0.0, init);
  FullState s = init;
  std::optional<FullTendency> prev;
  for (int j = 0; j <= 5; ++j) {
    const Vector r = coupling_r(s.Y, p);
    for (int n = 0; n < p.N; ++n) {
      EXPECT_EQ(t.X(j, n), s.X[n]);
      EXPECT_EQ(t.r(j, n), r[n]);
    }
    auto res = ab2_step(s, prev, p, static_cast<std::size_t>(j));
    s = res.state;
    prev = res.tendency;
  }
}

TEST(Generate, RejectsBadArguments) {
  L96Params p;
  RandomEngine rng(1);
  EXPECT_THROW(generate_trajectory(p, 0.0, 1.0, rng), ConfigError);
  EXPECT_THROW(generate_trajectory(p, 1.0, -1.0, rng), ConfigError);
  FullState wrong{Vector::Zero(3), Vector::Zero(3)};
  EXPECT_THROW(generate_trajectory(p, 1.0, 0.0, wrong), ConfigError);
}

TEST(Trajectory, SliceAndCheck) {
  const Trajectory t = oracle::ramp_trajectory(10, 3);
  const Trajectory s = t.slice(2, 4);
  EXPECT_EQ(s.rows(), 4);
  EXPECT_EQ(s.X(0, 1), t.X(2, 1));
  Trajectory bad = t;
  bad.times[5] = bad.times[4];
  EXPECT_ANY_THROW(bad.check());
}
