#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace qsn {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;

/// Bad parameters, mismatched shapes, inconsistent artifacts.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values showing up where they must not.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Time integration produced a non-finite state.
class BlowUpError : public NumericError {
public:
  BlowUpError(std::size_t step, double time, const std::string& what, Vector last_finite = {})
      : NumericError(what + " (step " + std::to_string(step) + ", t=" + std::to_string(time) + ")"),
        step_(step), time_(time), last_finite_(std::move(last_finite)) {}

  std::size_t step() const noexcept { return step_; }
  double time() const noexcept { return time_; }
  /// Macro state before the failing step, when the caller recorded it.
  const Vector& last_finite_state() const noexcept { return last_finite_; }

private:
  std::size_t step_;
  double time_;
  Vector last_finite_;
};

/// A feature column (or other sample set) has zero spread.
class DegenerateDataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace qsn
