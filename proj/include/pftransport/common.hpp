#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pft {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Time-indexed arrays (one row per timestep) are stored row-major so a
/// single timestep is contiguous.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Bad input: wrong dimension, non-finite value, violated precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A state evaluated inside the exclusion radius of a flow singularity.
class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical integration produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::ptrdiff_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

/// Linear-algebra failure that the caller can act on (e.g. rank deficiency).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

/// Number of unique second raw moments in dimension d.
constexpr int second_moment_count(int d) { return d * (d + 1) / 2; }

/// Length of the moment output vector (first + unique second raw moments).
constexpr int moment_output_size(int d) { return d + second_moment_count(d); }

}  // namespace pft
