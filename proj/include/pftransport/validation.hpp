#pragma once

#include <cstdint>
#include <string>

#include "pftransport/dynamics.hpp"

namespace pft {

/// i.i.d. Gaussian draws, reproducible from the seed.
struct SampleEnsemble {
  RowMatrix samples;  // n x d
  std::uint64_t seed = 0;
  Vector mean;
  Matrix cov;
  static constexpr const char* kGenerator = "mt19937_64+std::normal_distribution";
};

/// Throws InvalidArgument unless cov is symmetric positive semidefinite and
/// n >= 1. A zero covariance yields n copies of the mean.
SampleEnsemble sample_gaussian(const Vector& mean, const Matrix& cov, int n, std::uint64_t seed);

/// Raw moments over time. m2 columns follow the upper-triangle row-major order.
struct MomentSeries {
  Vector times;  // H+1
  RowMatrix m1;  // (H+1) x d
  RowMatrix m2;  // (H+1) x d(d+1)/2

  int dim() const { return static_cast<int>(m1.cols()); }
  int length() const { return static_cast<int>(times.size()); }

  /// Build from (H+1) x p raw-moment outputs (m1 columns then m2 columns).
  static MomentSeries from_outputs(const RowMatrix& outputs, int dim, double dt);
  /// Mean and covariance at row t.
  void mean_cov(int t, Vector& mean, Matrix& cov) const;
};

/// First and second raw moments of the rows of `samples`.
void sample_raw_moments(const RowMatrix& samples, Vector& m1, Vector& m2);

struct MonteCarloOptions {
  /// Runs with more than this fraction of divergent samples are invalid.
  double max_excluded_fraction = 0.01;
};

struct MonteCarloResult {
  MomentSeries series;
  RowMatrix final_samples;  // surviving samples at the last step
  long excluded = 0;
  bool valid = true;
};

/// Integrates every sample under the same zero-order-hold control signal
/// (H = controls.rows() steps) and records raw sample moments per step.
/// Samples that diverge or hit a singularity are excluded and counted.
MonteCarloResult monte_carlo_moments(const ControlAffineSystem& sys, const SampleEnsemble& ensemble,
                                     const RowMatrix& controls, double dt,
                                     MonteCarloOptions options = {});

struct LinearizationOptions {
  /// Terms of the Taylor series of exp(dt J) kept in the covariance
  /// transition: 2 gives A = I + dt J + dt^2 J^2 / 2, 4 matches the RK4
  /// transition and makes linear systems exact to the integrator's order.
  int covariance_order = 2;
};

/// EKF-style prediction: the mean follows RK4 on the nonlinear field and
/// the covariance follows Sigma+ = A Sigma A^T, with A the truncated
/// exponential of dt J and J the field Jacobian at the current mean.
MomentSeries linearized_moment_prediction(const ControlAffineSystem& sys, const Vector& mean0,
                                          const Matrix& cov0, const RowMatrix& controls, double dt,
                                          LinearizationOptions options = {});

struct MomentError {
  RowMatrix m1_abs;  // per time, per component
  RowMatrix m2_abs;
  Vector m1_max;     // per component, over time
  Vector m2_max;
  double m1_max_all = 0.0;
  double m2_max_all = 0.0;
  double m1_rms = 0.0;
  double m2_rms = 0.0;
};

/// Throws InvalidArgument if the two series are on different time grids.
MomentError moment_error(const MomentSeries& a, const MomentSeries& b);

}  // namespace pft
