#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "pftransport/basis.hpp"
#include "pftransport/ddp.hpp"
#include "pftransport/edmd.hpp"

namespace pft::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

/// Bilinear model with random generators on a 1-D dictionary of size k, so
/// that C has p = 2 rows. Generators are scaled to keep dt-steps tame.
inline GeneratorModel random_model(int k, int nc, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  Matrix centers = Vector::LinSpaced(k, -1.0, 1.0);
  GeneratorModel m;
  m.dictionary = std::make_shared<const Dictionary>(centers, 0.5);
  m.l0 = random_matrix(k, k, rng, scale / std::sqrt(static_cast<double>(k)));
  for (int i = 0; i < nc; ++i) m.b.push_back(random_matrix(k, k, rng, scale / std::sqrt(static_cast<double>(k))));
  m.c = moment_matrix(*m.dictionary);
  m.dt_data = 0.005;
  return m;
}

inline Matrix random_psd(Eigen::Index n, std::mt19937_64& rng, double floor = 0.0) {
  const Matrix f = random_matrix(n, n, rng);
  return f * f.transpose() / static_cast<double>(n) + floor * Matrix::Identity(n, n);
}

// Finite-horizon LQ tracking solved by a textbook Riccati recursion with a
// linear value term: V_t(x) = x^T P_t x - 2 q_t^T x + const, for
//   x+ = A x + B u,  y = C x,
//   J = sum_t u^T R u + sum_{t=1}^{H-1} |y_t - r_t|_S^2 + |y_H - r_H|_{S_H}^2.
struct RiccatiSolution {
  std::vector<Matrix> k;    // u_t = k[t] x_t + kff[t]
  std::vector<Vector> kff;
  RowMatrix u;              // optimal open-loop controls from x0
};

inline RiccatiSolution riccati_oracle(const Matrix& a, const Matrix& b, const Matrix& c, const OcpSpec& spec,
                               const Vector& x0) {
  const int h = spec.horizon;
  Matrix p = c.transpose() * spec.s_terminal * c;
  Vector q = c.transpose() * spec.s_terminal * spec.y_ref.row(h).transpose();
  RiccatiSolution sol;
  sol.k.resize(h);
  sol.kff.resize(h);
  for (int t = h - 1; t >= 0; --t) {
    const Matrix m = spec.r + b.transpose() * p * b;
    const Matrix kt = -m.ldlt().solve(b.transpose() * p * a);
    const Vector ft = m.ldlt().solve(b.transpose() * q);
    const Matrix st = t >= 1 ? spec.s : Matrix::Zero(spec.s.rows(), spec.s.cols());
    const Matrix pn = c.transpose() * st * c + a.transpose() * p * a + a.transpose() * p * b * kt;
    const Vector qn = c.transpose() * st * spec.y_ref.row(t).transpose() + (a + b * kt).transpose() * q;
    p = 0.5 * (pn + pn.transpose());
    q = qn;
    sol.k[t] = kt;
    sol.kff[t] = ft;
  }
  sol.u.resize(h, b.cols());
  Vector x = x0;
  for (int t = 0; t < h; ++t) {
    const Vector u = sol.k[t] * x + sol.kff[t];
    sol.u.row(t) = u.transpose();
    x = a * x + b * u;
  }
  return sol;
}

// Classic RK4 applied to x' = M x + N u with u held: x+ = A x + B u.
inline void rk4_discretize(const Matrix& m, const Matrix& n, double dt, Matrix& a, Matrix& b) {
  const Eigen::Index k = m.rows();
  const Matrix hm = dt * m;
  const Matrix i = Matrix::Identity(k, k);
  a = i + hm + hm * hm / 2.0 + hm * hm * hm / 6.0 + hm * hm * hm * hm / 24.0;
  b = dt * (i + hm / 2.0 + hm * hm / 6.0 + hm * hm * hm / 24.0) * n;
}

inline OcpSpec random_spec(int h, int p, int nc, double dt, std::mt19937_64& rng) {
  OcpSpec spec;
  spec.horizon = h;
  spec.dt = dt;
  spec.s = random_psd(p, rng);
  spec.r = random_psd(nc, rng, 0.5);
  spec.s_terminal = 10.0 * random_psd(p, rng);
  spec.y_ref = random_matrix(h + 1, p, rng);
  return spec;
}

// Lifted model whose RK4 step is affine in u: the last coordinate is a
// constant 1 and each B_i only maps it into the other coordinates, so every
// product with two B factors vanishes.
struct AffineLiftedInstance {
  std::shared_ptr<GeneratorModel> model;
  Matrix a, b;  // exact discrete dynamics on the augmented state
  Vector x0;
};

inline AffineLiftedInstance affine_lifted_instance(int k, int nc, double dt, std::uint64_t seed) {
  AffineLiftedInstance inst;
  inst.model = std::make_shared<GeneratorModel>(random_model(k + 1, nc, seed));
  GeneratorModel& m = *inst.model;
  m.l0.row(k).setZero();
  Matrix columns(k + 1, nc);
  for (int i = 0; i < nc; ++i) {
    const Vector col = m.b[i].col(0);
    m.b[i].setZero();
    m.b[i].col(k).head(k) = col.head(k);
    columns.col(i) = m.b[i].col(k);
  }
  rk4_discretize(m.l0, columns, dt, inst.a, inst.b);
  std::mt19937_64 rng(seed + 1);
  inst.x0 = random_matrix(k + 1, 1, rng);
  inst.x0[k] = 1.0;
  return inst;
}

// Adaptive 2-D quadrature of h(x1, x2) * psi(x) over a box wide enough that
// the Gaussian tail is below double precision.
template <typename H>
inline double quad2(const Vector& c, double width, H h) {
  using boost::math::quadrature::gauss_kronrod;
  const double reach = 9.0 * width;
  auto inner = [&](double x1) {
    auto f = [&](double x2) {
      const double r2 = (x1 - c[0]) * (x1 - c[0]) + (x2 - c[1]) * (x2 - c[1]);
      return h(x1, x2) * std::exp(-r2 / (width * width));
    };
    return gauss_kronrod<double, 31>::integrate(f, c[1] - reach, c[1] + reach, 15, 1e-14);
  };
  return gauss_kronrod<double, 31>::integrate(inner, c[0] - reach, c[0] + reach, 15, 1e-14);
}

// Rows of C for a single-center dictionary, by quadrature.
inline Vector quadrature_moment_column(const Vector& c, double width) {
  Vector col(5);
  col[0] = quad2(c, width, [](double x1, double) { return x1; });
  col[1] = quad2(c, width, [](double, double x2) { return x2; });
  col[2] = quad2(c, width, [](double x1, double) { return x1 * x1; });
  col[3] = quad2(c, width, [](double x1, double x2) { return x1 * x2; });
  col[4] = quad2(c, width, [](double, double x2) { return x2 * x2; });
  return col;
}


}  // namespace pft::testing
