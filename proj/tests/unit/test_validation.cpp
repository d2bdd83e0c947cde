#include <doctest.h>

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "fixtures.hpp"
#include "pftransport/validation.hpp"

using namespace pft;
using pft::testing::vec;

namespace {

ControlAffineSystem decay_system() {
  return make_linear_system(-Matrix::Identity(2, 2), Matrix::Zero(2, 1));
}

double rk4_decay_factor(double dt) { return 1.0 - dt + dt * dt / 2.0 - dt * dt * dt / 6.0 + dt * dt * dt * dt / 24.0; }

}  // namespace

TEST_SUITE("validation") {

TEST_CASE("sampling is reproducible from the seed") {
  const Vector mean = vec({1.0, -0.5});
  const Matrix cov = (Matrix(2, 2) << 0.3, 0.1, 0.1, 0.2).finished();
  const SampleEnsemble a = sample_gaussian(mean, cov, 500, 42);
  const SampleEnsemble b = sample_gaussian(mean, cov, 500, 42);
  const SampleEnsemble c = sample_gaussian(mean, cov, 500, 43);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.seed == 42);
}

TEST_CASE("sample moments approach the distribution moments") {
  const Vector mean = vec({1.0, -0.5});
  const Matrix cov = (Matrix(2, 2) << 0.3, 0.1, 0.1, 0.2).finished();
  const int n = 200000;
  const SampleEnsemble ens = sample_gaussian(mean, cov, n, 7);
  Vector m1, m2;
  sample_raw_moments(ens.samples, m1, m2);
  const Vector expected = moments_from_mean_cov(mean, cov);
  Vector got(5);
  got << m1, m2;
  // Five standard errors with a generous per-moment spread bound.
  CHECK((got - expected).cwiseAbs().maxCoeff() <= 5.0 * 1.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("degenerate and invalid covariances") {
  const SampleEnsemble ens = sample_gaussian(vec({2.0, 3.0}), Matrix::Zero(2, 2), 4, 1);
  for (int i = 0; i < 4; ++i) CHECK(ens.samples.row(i) == vec({2.0, 3.0}).transpose());
  CHECK_THROWS_AS(sample_gaussian(vec({0.0, 0.0}), -Matrix::Identity(2, 2), 4, 1), InvalidArgument);
  CHECK_THROWS_AS(sample_gaussian(vec({0.0, 0.0}), (Matrix(2, 2) << 1, 0.5, 0, 1).finished(), 4, 1), InvalidArgument);
  CHECK_THROWS_AS(sample_gaussian(vec({0.0, 0.0}), Matrix::Identity(2, 2), 0, 1), InvalidArgument);
  CHECK_THROWS_AS(sample_gaussian(vec({0.0, 0.0}), Matrix::Identity(3, 3), 4, 1), InvalidArgument);
}

TEST_CASE("raw moments by hand") {
  RowMatrix s(2, 2);
  s << 1.0, 2.0, 3.0, 4.0;
  Vector m1, m2;
  sample_raw_moments(s, m1, m2);
  CHECK(m1 == vec({2.0, 3.0}));
  CHECK(m2 == vec({5.0, 7.0, 10.0}));
}

TEST_CASE("zero field keeps sample moments fixed") {
  const SampleEnsemble ens = sample_gaussian(vec({0.5, 0.5}), 0.1 * Matrix::Identity(2, 2), 300, 3);
  const MonteCarloResult mc =
      monte_carlo_moments(make_linear_system(Matrix::Zero(2, 2), Matrix::Zero(2, 1)), ens, RowMatrix::Zero(10, 1), 0.1);
  Vector m1, m2;
  sample_raw_moments(ens.samples, m1, m2);
  CHECK(mc.excluded == 0);
  CHECK(mc.valid);
  REQUIRE(mc.series.length() == 11);
  for (int t = 0; t <= 10; ++t) {
    CHECK(mc.series.m1.row(t) == m1.transpose());
    CHECK(mc.series.m2.row(t) == m2.transpose());
  }
}

TEST_CASE("linear decay scales moments by the step factor") {
  const double dt = 0.05;
  const double g = rk4_decay_factor(dt);
  const SampleEnsemble ens = sample_gaussian(vec({1.0, -2.0}), 0.2 * Matrix::Identity(2, 2), 200, 9);
  const MonteCarloResult mc = monte_carlo_moments(decay_system(), ens, RowMatrix::Zero(20, 1), dt);
  Vector m1, m2;
  sample_raw_moments(ens.samples, m1, m2);
  for (int t : {1, 7, 20}) {
    CHECK((mc.series.m1.row(t).transpose() - std::pow(g, t) * m1).norm() <= 1e-12);
    CHECK((mc.series.m2.row(t).transpose() - std::pow(g, 2 * t) * m2).norm() <= 1e-12);
  }
  CHECK(mc.series.times[20] == doctest::Approx(1.0));
  CHECK(mc.final_samples.rows() == 200);
}

TEST_CASE("divergent samples are excluded and counted") {
  SampleEnsemble ens = sample_gaussian(vec({0.0, 0.0}), 0.1 * Matrix::Identity(2, 2), 100, 11);
  ens.samples.row(3) << 1e120, 0.0;
  ens.samples.row(50) << -1e120, 1.0;
  const MonteCarloResult mc = monte_carlo_moments(make_duffing_system(), ens, RowMatrix::Zero(5, 1), 0.01);
  CHECK(mc.excluded == 2);
  CHECK_FALSE(mc.valid);
  CHECK(mc.final_samples.rows() == 98);
  CHECK(mc.series.m1.allFinite());
  MonteCarloOptions lenient;
  lenient.max_excluded_fraction = 0.05;
  CHECK(monte_carlo_moments(make_duffing_system(), ens, RowMatrix::Zero(5, 1), 0.01, lenient).valid);
}

TEST_CASE("linearized prediction on linear decay") {
  const double dt = 0.1;
  const Matrix cov0 = (Matrix(2, 2) << 0.3, 0.1, 0.1, 0.2).finished();
  const MomentSeries s = linearized_moment_prediction(decay_system(), vec({1.0, 2.0}), cov0, RowMatrix::Zero(10, 1), dt);
  Vector mean;
  Matrix cov;
  s.mean_cov(10, mean, cov);
  const double a = 1.0 - dt + dt * dt / 2.0;
  CHECK((mean - std::pow(rk4_decay_factor(dt), 10) * vec({1.0, 2.0})).norm() <= 1e-13);
  CHECK((cov - std::pow(a, 20) * cov0).norm() <= 1e-13);
}

TEST_CASE("moment series conversions") {
  RowMatrix y(2, 5);
  y << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  const MomentSeries s = MomentSeries::from_outputs(y, 2, 0.5);
  CHECK(s.dim() == 2);
  CHECK(s.length() == 2);
  CHECK(s.times[1] == 0.5);
  CHECK(s.m1(1, 1) == 7);
  CHECK(s.m2(0, 2) == 5);
  CHECK_THROWS_AS(MomentSeries::from_outputs(RowMatrix::Zero(2, 4), 2, 0.5), InvalidArgument);

  const Vector mean0 = vec({0.3, -0.7});
  const Matrix cov0 = (Matrix(2, 2) << 0.5, -0.1, -0.1, 0.25).finished();
  RowMatrix z(1, 5);
  z.row(0) = moments_from_mean_cov(mean0, cov0).transpose();
  Vector mean;
  Matrix cov;
  MomentSeries::from_outputs(z, 2, 1.0).mean_cov(0, mean, cov);
  CHECK((mean - mean0).norm() <= 1e-15);
  CHECK((cov - cov0).norm() <= 1e-15);
}

TEST_CASE("moment error by hand") {
  MomentSeries a, b;
  a.times = vec({0.0, 1.0});
  b.times = a.times;
  a.m1 = RowMatrix::Zero(2, 2);
  a.m2 = RowMatrix::Zero(2, 3);
  b.m1 = a.m1;
  b.m2 = a.m2;
  b.m1(1, 0) = -0.3;
  b.m1(0, 1) = 0.1;
  b.m2(1, 2) = 0.4;
  const MomentError e = moment_error(a, b);
  CHECK(e.m1_max_all == 0.3);
  CHECK(e.m1_max == vec({0.3, 0.1}));
  CHECK(e.m2_max_all == 0.4);
  CHECK(e.m1_rms == doctest::Approx(std::sqrt(0.1 / 4.0)));
  b.times[1] = 1.5;
  CHECK_THROWS_AS(moment_error(a, b), InvalidArgument);
}


TEST_CASE("linearized prediction is exact on a linear system") {
  const Matrix a = (Matrix(2, 2) << -0.3, 1.0, -1.0, -0.2).finished();
  const Matrix b = (Matrix(2, 1) << 0.0, 1.0).finished();
  const ControlAffineSystem sys = make_linear_system(a, b);
  const Vector mean0 = vec({0.5, -1.0});
  const Matrix cov0 = (Matrix(2, 2) << 0.2, 0.05, 0.05, 0.1).finished();
  const double dt = 0.005;
  LinearizationOptions opts;
  opts.covariance_order = 4;
  const MomentSeries s = linearized_moment_prediction(sys, mean0, cov0, RowMatrix::Zero(400, 1), dt, opts);
  const Matrix phi = (a * 2.0).exp();
  Vector mean;
  Matrix cov;
  s.mean_cov(400, mean, cov);
  CHECK((mean - phi * mean0).norm() <= 1e-8);
  CHECK((cov - phi * cov0 * phi.transpose()).norm() <= 1e-8);

  // The default second-order transition carries an O(dt^2) global error.
  const MomentSeries s2 = linearized_moment_prediction(sys, mean0, cov0, RowMatrix::Zero(400, 1), dt);
  s2.mean_cov(400, mean, cov);
  CHECK((cov - phi * cov0 * phi.transpose()).norm() <= 1e-4);
}

TEST_CASE("zero initial covariance stays zero") {
  const RowMatrix u = RowMatrix::Constant(50, 1, 0.3);
  const MomentSeries s = linearized_moment_prediction(make_duffing_system(), vec({-0.5, 1.0}), Matrix::Zero(2, 2), u, 0.01);
  const RowMatrix x = integrate(make_duffing_system(), vec({-0.5, 1.0}), u, 0.01, 50);
  for (int t = 0; t <= 50; ++t) {
    Vector mean;
    Matrix cov;
    s.mean_cov(t, mean, cov);
    CHECK(mean == x.row(t).transpose());
    CHECK(cov.cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("linearized prediction agrees with Monte Carlo on a linear system") {
  const Matrix a = (Matrix(2, 2) << -0.3, 1.0, -1.0, -0.2).finished();
  const ControlAffineSystem sys = make_linear_system(a, (Matrix(2, 1) << 0.0, 1.0).finished());
  const double dt = 0.005;
  RowMatrix u(400, 1);
  for (int t = 0; t < 400; ++t) u(t, 0) = std::sin(4.0 * M_PI * t * dt);
  // A tight initial spread keeps the sampling error of the mean below the bound.
  const Matrix cov0 = 1e-4 * Matrix::Identity(2, 2);
  const MomentSeries lin = linearized_moment_prediction(sys, vec({1.0, 0.0}), cov0, u, dt);
  const MonteCarloResult mc = monte_carlo_moments(sys, sample_gaussian(vec({1.0, 0.0}), cov0, 1000, 5), u, dt);
  CHECK(moment_error(lin, mc.series).m1_max_all <= 1e-3);
}

TEST_CASE("sample second moments stay consistent on the Duffing flow") {
  const double dt = 0.005;
  RowMatrix u(600, 1);
  for (int t = 0; t < 600; ++t) u(t, 0) = std::sin(4.0 * M_PI * t * dt);
  const Matrix cov0 = 0.05 * Matrix::Identity(2, 2);
  const MonteCarloResult small =
      monte_carlo_moments(make_duffing_system(), sample_gaussian(vec({-0.5, 1.0}), cov0, 500, 100), u, dt);
  const MonteCarloResult large =
      monte_carlo_moments(make_duffing_system(), sample_gaussian(vec({-0.5, 1.0}), cov0, 1000, 200), u, dt);
  bool psd = true;
  double worst_ratio = 0.0;
  for (int t = 0; t <= 600; ++t) {
    Vector mean;
    Matrix cov;
    large.series.mean_cov(t, mean, cov);
    psd = psd && Eigen::SelfAdjointEigenSolver<Matrix>(cov).eigenvalues().minCoeff() >= -1e-12;
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt(std::max(cov(j, j), 1e-300) / 500.0);
      worst_ratio = std::max(worst_ratio, std::abs(small.series.m1(t, j) - large.series.m1(t, j)) / se);
    }
  }
  CHECK(psd);
  INFO("max |m1(500) - m1(1000)| / (sigma / sqrt(500)) = " << worst_ratio);
  CHECK(worst_ratio <= 2.0);
}

}
