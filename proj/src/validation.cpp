#include "pftransport/validation.hpp"

#include <cmath>
#include <random>

#include "pftransport/basis.hpp"

namespace pft {

SampleEnsemble sample_gaussian(const Vector& mean, const Matrix& cov, int n, std::uint64_t seed) {
  const Eigen::Index d = mean.size();
  require(n >= 1, "sample_gaussian: n must be >= 1");
  require(mean.allFinite(), "sample_gaussian: non-finite mean");
  require(cov.rows() == d && cov.cols() == d, "sample_gaussian: covariance shape mismatch");
  require(cov.allFinite() && (cov - cov.transpose()).isZero(1e-12 * std::max(1.0, cov.norm())),
          "sample_gaussian: covariance not symmetric");

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  require(eig.eigenvalues().minCoeff() >= -1e-12 * scale,
          "sample_gaussian: covariance not positive semidefinite");
  // cov = F F^T with F = V sqrt(max(lambda, 0)); valid for singular cov too.
  const Matrix factor =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  SampleEnsemble ens;
  ens.seed = seed;
  ens.mean = mean;
  ens.cov = cov;
  ens.samples.resize(n, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(d);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index a = 0; a < d; ++a) z[a] = normal(rng);
    ens.samples.row(i) = (mean + factor * z).transpose();
  }
  return ens;
}

MomentSeries MomentSeries::from_outputs(const RowMatrix& outputs, int dim, double dt) {
  require(outputs.cols() == moment_output_size(dim), "MomentSeries: output width mismatch");
  MomentSeries s;
  const Eigen::Index n = outputs.rows();
  s.times = Vector::LinSpaced(n, 0.0, dt * static_cast<double>(n - 1));
  s.m1 = outputs.leftCols(dim);
  s.m2 = outputs.rightCols(second_moment_count(dim));
  return s;
}

void MomentSeries::mean_cov(int t, Vector& mean, Matrix& cov) const {
  Vector y(m1.cols() + m2.cols());
  y << m1.row(t).transpose(), m2.row(t).transpose();
  mean_cov_from_moments(y, dim(), mean, cov);
}

void sample_raw_moments(const RowMatrix& samples, Vector& m1, Vector& m2) {
  const Eigen::Index n = samples.rows();
  const int d = static_cast<int>(samples.cols());
  require(n >= 1, "sample_raw_moments: empty sample set");
  m1 = samples.colwise().mean().transpose();
  m2.resize(second_moment_count(d));
  int row = 0;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b)
      m2[row++] = (samples.col(a).array() * samples.col(b).array()).sum() / static_cast<double>(n);
}

MonteCarloResult monte_carlo_moments(const ControlAffineSystem& sys, const SampleEnsemble& ensemble,
                                     const RowMatrix& controls, double dt,
                                     MonteCarloOptions options) {
  sys.validate();
  require(dt > 0.0, "monte_carlo_moments: dt must be positive");
  require(ensemble.samples.cols() == sys.state_dim, "monte_carlo_moments: sample dimension mismatch");
  require(controls.cols() == sys.control_dim, "monte_carlo_moments: control width mismatch");
  require(controls.allFinite(), "monte_carlo_moments: non-finite controls");
  const int d = sys.state_dim;
  const Eigen::Index n = ensemble.samples.rows();
  const Eigen::Index h = controls.rows();

  RowMatrix x = ensemble.samples;
  std::vector<char> alive(n, 1);
  MonteCarloResult res;
  res.series.times = Vector::LinSpaced(h + 1, 0.0, dt * static_cast<double>(h));
  res.series.m1.resize(h + 1, d);
  res.series.m2.resize(h + 1, second_moment_count(d));

  auto record = [&](Eigen::Index t) {
    Vector m1 = Vector::Zero(d);
    Vector m2 = Vector::Zero(second_moment_count(d));
    long count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      ++count;
      m1 += x.row(i).transpose();
      int row = 0;
      for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) m2[row++] += x(i, a) * x(i, b);
    }
    require(count > 0, "monte_carlo_moments: every sample diverged");
    res.series.m1.row(t) = (m1 / static_cast<double>(count)).transpose();
    res.series.m2.row(t) = (m2 / static_cast<double>(count)).transpose();
  };

  record(0);
  for (Eigen::Index t = 0; t < h; ++t) {
    const Vector u = controls.row(t).transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      try {
        const Vector next = rk4_step(sys, x.row(i).transpose(), u, dt);
        if (next.allFinite()) {
          x.row(i) = next.transpose();
        } else {
          alive[i] = 0;
        }
      } catch (const SingularityError&) {
        alive[i] = 0;
      } catch (const InvalidArgument&) {
        alive[i] = 0;  // non-finite intermediate stage
      }
    }
    record(t + 1);
  }

  long survivors = 0;
  for (char a : alive) survivors += a ? 1 : 0;
  res.excluded = n - survivors;
  res.valid = static_cast<double>(res.excluded) <= options.max_excluded_fraction * static_cast<double>(n);
  res.final_samples.resize(survivors, d);
  long r = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (alive[i]) res.final_samples.row(r++) = x.row(i);
  return res;
}

MomentSeries linearized_moment_prediction(const ControlAffineSystem& sys, const Vector& mean0,
                                          const Matrix& cov0, const RowMatrix& controls, double dt,
                                          LinearizationOptions options) {
  sys.validate();
  require(options.covariance_order >= 1, "linearized_moment_prediction: covariance_order must be >= 1");
  const int d = sys.state_dim;
  require(dt > 0.0, "linearized_moment_prediction: dt must be positive");
  require(mean0.size() == d && cov0.rows() == d && cov0.cols() == d,
          "linearized_moment_prediction: dimension mismatch");
  require(controls.cols() == sys.control_dim, "linearized_moment_prediction: control width mismatch");
  const Eigen::Index h = controls.rows();

  MomentSeries s;
  s.times = Vector::LinSpaced(h + 1, 0.0, dt * static_cast<double>(h));
  s.m1.resize(h + 1, d);
  s.m2.resize(h + 1, second_moment_count(d));
  Vector mean = mean0;
  Matrix cov = cov0;
  auto record = [&](Eigen::Index t) {
    const Vector y = moments_from_mean_cov(mean, cov);
    s.m1.row(t) = y.head(d).transpose();
    s.m2.row(t) = y.tail(second_moment_count(d)).transpose();
  };
  record(0);
  const Matrix eye = Matrix::Identity(d, d);
  for (Eigen::Index t = 0; t < h; ++t) {
    const Vector u = controls.row(t).transpose();
    const Matrix jac = sys.field_jacobian(mean, u);
    Matrix a = eye;
    Matrix term = eye;
    for (int j = 1; j <= options.covariance_order; ++j) {
      term = term * jac * (dt / j);
      a += term;
    }
    cov = a * cov * a.transpose();
    cov = 0.5 * (cov + cov.transpose());
    mean = rk4_step(sys, mean, u, dt);
    if (!mean.allFinite()) throw DivergenceError("linearized_moment_prediction: non-finite mean", t);
    record(t + 1);
  }
  return s;
}

MomentError moment_error(const MomentSeries& a, const MomentSeries& b) {
  require(a.times.size() == b.times.size(), "moment_error: series lengths differ");
  require((a.times - b.times).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, a.times.cwiseAbs().maxCoeff()),
          "moment_error: time grids differ");
  require(a.m1.cols() == b.m1.cols() && a.m2.cols() == b.m2.cols(), "moment_error: dimension mismatch");
  MomentError e;
  e.m1_abs = (a.m1 - b.m1).cwiseAbs();
  e.m2_abs = (a.m2 - b.m2).cwiseAbs();
  e.m1_max = e.m1_abs.colwise().maxCoeff().transpose();
  e.m2_max = e.m2_abs.colwise().maxCoeff().transpose();
  e.m1_max_all = e.m1_max.maxCoeff();
  e.m2_max_all = e.m2_max.maxCoeff();
  e.m1_rms = std::sqrt(e.m1_abs.squaredNorm() / static_cast<double>(e.m1_abs.size()));
  e.m2_rms = std::sqrt(e.m2_abs.squaredNorm() / static_cast<double>(e.m2_abs.size()));
  return e;
}

}  // namespace pft
