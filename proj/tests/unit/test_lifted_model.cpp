#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pftransport/lifted_model.hpp"

using namespace pft;
using pft::testing::random_matrix;
using pft::testing::random_model;
using pft::testing::vec;

namespace {

double rel_diff(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

GeneratorModel zero_model(int k, int nc) {
  GeneratorModel m = random_model(k, nc, 1);
  m.l0.setZero();
  for (auto& b : m.b) b.setZero();
  return m;
}

Vector random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_matrix(n, 1, rng);
}

}  // namespace

TEST_SUITE("lifted_model") {

TEST_CASE("lifted derivative is bilinear") {
  const GeneratorModel m = random_model(9, 2, 11);
  const Vector rho = random_vector(9, 12);
  const Vector u1 = vec({0.3, -1.1});
  const Vector u2 = vec({-0.8, 0.4});
  CHECK(lifted_derivative(m, rho, Vector::Zero(2)) == m.l0 * rho);
  CHECK(lifted_derivative(m, Vector::Zero(9), u1).isZero(0.0));
  const Vector combo = lifted_derivative(m, rho, u1 + u2) - lifted_derivative(m, rho, u1) -
                       lifted_derivative(m, rho, u2) + lifted_derivative(m, rho, Vector::Zero(2));
  CHECK(combo.norm() <= 1e-13 * lifted_derivative(m, rho, u1).norm());
  const Vector expected = (m.l0 + u1[0] * m.b[0] + u1[1] * m.b[1]) * rho;
  CHECK(rel_diff(lifted_derivative(m, rho, u1), expected) <= 1e-14);
}

TEST_CASE("step of a zero model is the identity") {
  const GeneratorModel m = zero_model(6, 1);
  const Vector rho = random_vector(6, 3);
  CHECK(lifted_step(m, rho, vec({0.7}), 0.005) == rho);
  CHECK(lifted_step(m, rho, vec({0.7}), 0.005, StepScheme::kExpm) == rho);
}

TEST_CASE("step is linear in rho") {
  const GeneratorModel m = random_model(9, 1, 5);
  const Vector rho = random_vector(9, 6);
  const Vector u = vec({0.45});
  for (StepScheme s : {StepScheme::kRk4, StepScheme::kExpm}) {
    const Vector base = lifted_step(m, rho, u, 0.01, s);
    // Power-of-two scalings commute exactly with floating point.
    CHECK(lifted_step(m, 2.0 * rho, u, 0.01, s) == 2.0 * base);
    CHECK(lifted_step(m, 0.5 * rho, u, 0.01, s) == 0.5 * base);
    CHECK(rel_diff(lifted_step(m, -0.37 * rho, u, 0.01, s), -0.37 * base) <= 1e-14);
  }
}

TEST_CASE("rk4 step matches the matrix exponential on a well-scaled model") {
  const GeneratorModel m = random_model(12, 2, 31);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 4; ++trial) {
    const Vector rho = random_matrix(12, 1, rng);
    const Vector u = random_matrix(2, 1, rng);
    INFO("trial " << trial);
    CHECK(rel_diff(lifted_step(m, rho, u, 0.005), lifted_step(m, rho, u, 0.005, StepScheme::kExpm)) <= 1e-12);
  }
}

TEST_CASE("rk4 step on the Duffing model tracks the exponential") {
  // The estimated generator has modes with |lambda| dt close to 1, so the
  // two schemes differ by the RK4 truncation error on those modes.
  const auto model = pft::testing::duffing_model();
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 4; ++trial) {
    const Vector rho = random_matrix(model->lifted_dim(), 1, rng);
    const Vector u = vec({unif(rng)});
    const Vector a = lifted_step(*model, rho, u, 0.005);
    const Vector b = lifted_step(*model, rho, u, 0.005, StepScheme::kExpm);
    INFO("trial " << trial << " u " << u[0]);
    CHECK(rel_diff(a, b) <= 5e-3);
  }
}

TEST_CASE("two half steps agree with one full step") {
  const GeneratorModel m = random_model(12, 1, 33);
  std::mt19937_64 rng(7);
  const Vector rho = random_matrix(12, 1, rng);
  const Vector u = vec({0.6});
  const Vector full = lifted_step(m, rho, u, 0.005);
  const Vector half = lifted_step(m, lifted_step(m, rho, u, 0.0025), u, 0.0025);
  CHECK(rel_diff(full, half) <= 1e-12);
}

TEST_CASE("expm action is exact for a nilpotent generator") {
  // L0 = [[0, 1], [0, 0]] on a 2-element dictionary: exp(L0 t) = [[1, t], [0, 1]].
  GeneratorModel m = random_model(2, 0, 1);
  m.l0 << 0.0, 1.0, 0.0, 0.0;
  const Vector out = expm_action(m, Vector(), 0.25, vec({1.0, 2.0}));
  CHECK(out[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(out[1] == 2.0);
}

TEST_CASE("rollout bookkeeping") {
  const GeneratorModel m = random_model(9, 2, 21);
  const Vector rho0 = random_vector(9, 22);
  std::mt19937_64 rng(23);
  const RowMatrix u = random_matrix(6, 2, rng);
  const LiftedTrajectory traj = rollout(m, rho0, u, 0.01);
  REQUIRE(traj.states.rows() == 7);
  REQUIRE(traj.outputs.rows() == 7);
  CHECK(traj.horizon() == 6);
  CHECK(traj.controls == u);
  for (int t = 0; t < 7; ++t) {
    CHECK(traj.outputs.row(t).transpose() == m.c * traj.states.row(t).transpose());
    if (t < 6) {
      const Vector next = lifted_step(m, traj.states.row(t).transpose(), u.row(t).transpose(), 0.01);
      CHECK(traj.states.row(t + 1).transpose() == next);
    }
  }

  const LiftedTrajectory empty = rollout(m, rho0, RowMatrix(0, 2), 0.01);
  CHECK(empty.states.rows() == 1);
  CHECK(empty.outputs.row(0).transpose() == m.c * rho0);

  const LiftedTrajectory still = rollout(zero_model(9, 2), rho0, u, 0.01);
  for (int t = 0; t < 7; ++t) CHECK(still.states.row(t).transpose() == rho0);
}

TEST_CASE("rollout reports the divergent step") {
  GeneratorModel m = random_model(3, 1, 2);
  m.l0 = 1e60 * Matrix::Identity(3, 3);
  try {
    rollout(m, Vector::Ones(3), RowMatrix::Zero(5, 1), 1.0);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 1);
  }
  RowMatrix bad = RowMatrix::Zero(3, 1);
  bad(1, 0) = NAN;
  CHECK_THROWS_AS(rollout(m, Vector::Ones(3), bad, 0.01), InvalidArgument);
}

TEST_CASE("rk4 and expm rollouts agree over 400 steps on a random model") {
  const GeneratorModel m = random_model(9, 1, 31, 3.0);
  const Vector rho0 = random_vector(9, 32);
  RowMatrix u(400, 1);
  for (int t = 0; t < 400; ++t) u(t, 0) = std::sin(4.0 * M_PI * 0.005 * t);
  const LiftedTrajectory a = rollout(m, rho0, u, 0.005);
  const LiftedTrajectory b = rollout(m, rho0, u, 0.005, StepScheme::kExpm);
  CHECK((a.outputs - b.outputs).norm() / b.outputs.norm() <= 1e-6);
}

TEST_CASE("step polynomial reproduces the rk4 step and its derivatives") {
  for (int nc : {1, 2}) {
    const GeneratorModel m = random_model(9, nc, 40 + nc, 2.0);
    const double dt = 0.05;
    const Rk4StepPolynomial poly(m, dt);
    CHECK(poly.term_count() == (nc == 1 ? 5u : 15u));
    std::mt19937_64 rng(50 + nc);
    const Vector rho = random_matrix(9, 1, rng);
    const Vector u = random_matrix(nc, 1, rng);

    Matrix a;
    poly.state_jacobian(u, a);
    const Vector step = lifted_step(m, rho, u, dt);
    CHECK(rel_diff(a * rho, step) <= 1e-13);

    const double h = 1e-6;
    Matrix fd(9, nc);
    for (int i = 0; i < nc; ++i) {
      Vector up = u, um = u;
      up[i] += h;
      um[i] -= h;
      fd.col(i) = (lifted_step(m, rho, up, dt) - lifted_step(m, rho, um, dt)) / (2.0 * h);
    }
    const Matrix b = poly.control_jacobian(rho, u);
    INFO("nc " << nc);
    CHECK((b - fd).norm() <= 1e-6 * fd.norm());

    Matrix afd(9, 9);
    for (int j = 0; j < 9; ++j) {
      Vector rp = rho, rm = rho;
      rp[j] += h;
      rm[j] -= h;
      afd.col(j) = (lifted_step(m, rp, u, dt) - lifted_step(m, rm, u, dt)) / (2.0 * h);
    }
    CHECK((a - afd).norm() <= 1e-6 * afd.norm());
  }
}

}
