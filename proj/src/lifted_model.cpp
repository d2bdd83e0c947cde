#include "pftransport/lifted_model.hpp"

#include <cmath>
#include <map>

namespace pft {

namespace {

void check_dims(const GeneratorModel& model, const Vector& rho, const Vector& u) {
  require(rho.size() == model.lifted_dim(), "lifted model: rho has wrong length");
  require(u.size() == model.control_dim(), "lifted model: u has wrong length");
}

double one_norm(const Matrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace

Vector lifted_derivative(const GeneratorModel& model, const Vector& rho, const Vector& u) {
  check_dims(model, rho, u);
  Vector out = model.l0 * rho;
  for (int i = 0; i < model.control_dim(); ++i) {
    if (u[i] != 0.0) out.noalias() += u[i] * (model.b[i] * rho);
  }
  return out;
}

Vector expm_action(const GeneratorModel& model, const Vector& u, double dt, const Vector& v) {
  check_dims(model, v, u);
  double norm = one_norm(model.l0);
  for (int i = 0; i < model.control_dim(); ++i) norm += std::abs(u[i]) * one_norm(model.b[i]);
  const int substeps = std::max(1, static_cast<int>(std::ceil(norm * dt / 0.5)));
  const double h = dt / substeps;

  Vector x = v;
  for (int s = 0; s < substeps; ++s) {
    Vector term = x;
    Vector sum = x;
    for (int j = 1; j <= 60; ++j) {
      term = (h / j) * lifted_derivative(model, term, u);
      sum += term;
      if (term.lpNorm<Eigen::Infinity>() <= 1e-18 * sum.lpNorm<Eigen::Infinity>()) break;
    }
    x = std::move(sum);
  }
  return x;
}

Vector lifted_step(const GeneratorModel& model, const Vector& rho, const Vector& u, double dt,
                   StepScheme scheme) {
  require(dt > 0.0, "lifted_step: dt must be positive");
  check_dims(model, rho, u);
  if (scheme == StepScheme::kExpm) return expm_action(model, u, dt, rho);
  const Vector k1 = lifted_derivative(model, rho, u);
  const Vector k2 = lifted_derivative(model, rho + 0.5 * dt * k1, u);
  const Vector k3 = lifted_derivative(model, rho + 0.5 * dt * k2, u);
  const Vector k4 = lifted_derivative(model, rho + dt * k3, u);
  return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

LiftedTrajectory rollout(const GeneratorModel& model, const Vector& rho0, const RowMatrix& controls,
                         double dt, StepScheme scheme) {
  require(rho0.size() == model.lifted_dim(), "rollout: rho0 has wrong length");
  require(controls.cols() == model.control_dim(), "rollout: control width mismatch");
  require(controls.allFinite(), "rollout: non-finite controls");
  const Eigen::Index h = controls.rows();
  LiftedTrajectory traj;
  traj.dt = dt;
  traj.controls = controls;
  traj.states.resize(h + 1, rho0.size());
  traj.outputs.resize(h + 1, model.output_dim());
  Vector rho = rho0;
  traj.states.row(0) = rho.transpose();
  traj.outputs.row(0) = (model.c * rho).transpose();
  for (Eigen::Index t = 0; t < h; ++t) {
    rho = lifted_step(model, rho, controls.row(t).transpose(), dt, scheme);
    if (!rho.allFinite()) throw DivergenceError("rollout: non-finite lifted state", t);
    traj.states.row(t + 1) = rho.transpose();
    traj.outputs.row(t + 1) = (model.c * rho).transpose();
  }
  return traj;
}

Rk4StepPolynomial::Rk4StepPolynomial(const GeneratorModel& model, double dt)
    : control_dim_(model.control_dim()) {
  model.validate();
  require(dt > 0.0, "Rk4StepPolynomial: dt must be positive");
  const Eigen::Index k = model.lifted_dim();
  using Key = std::vector<int>;
  const Key zero(control_dim_, 0);

  // power[alpha] = coefficient of u^alpha in M^n; accumulate sum_n dt^n/n! M^n.
  std::map<Key, Matrix> power{{zero, Matrix::Identity(k, k)}};
  std::map<Key, Matrix> total{{zero, Matrix::Identity(k, k)}};
  double scale = 1.0;
  for (int n = 1; n <= 4; ++n) {
    scale *= dt / n;
    std::map<Key, Matrix> next;
    for (const auto& [alpha, p] : power) {
      Matrix& a = next.try_emplace(alpha, Matrix::Zero(k, k)).first->second;
      a.noalias() += model.l0 * p;
      for (int i = 0; i < control_dim_; ++i) {
        Key beta = alpha;
        ++beta[i];
        Matrix& b = next.try_emplace(beta, Matrix::Zero(k, k)).first->second;
        b.noalias() += model.b[i] * p;
      }
    }
    power = std::move(next);
    for (const auto& [alpha, p] : power) {
      Matrix& acc = total.try_emplace(alpha, Matrix::Zero(k, k)).first->second;
      acc += scale * p;
    }
  }
  for (auto& [alpha, m] : total) terms_.push_back(Term{alpha, std::move(m)});
}

double Rk4StepPolynomial::monomial(const std::vector<int>& e, const Vector& u) {
  double v = 1.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (int p = 0; p < e[i]; ++p) v *= u[i];
  return v;
}

void Rk4StepPolynomial::state_jacobian(const Vector& u, Matrix& out) const {
  require(u.size() == control_dim_, "Rk4StepPolynomial: u has wrong length");
  out = terms_.front().coeff * monomial(terms_.front().exponents, u);
  for (std::size_t j = 1; j < terms_.size(); ++j) {
    const double c = monomial(terms_[j].exponents, u);
    if (c != 0.0) out += c * terms_[j].coeff;
  }
}

Matrix Rk4StepPolynomial::control_jacobian(const Vector& rho, const Vector& u) const {
  require(u.size() == control_dim_, "Rk4StepPolynomial: u has wrong length");
  Matrix out = Matrix::Zero(rho.size(), control_dim_);
  for (const auto& term : terms_) {
    for (int i = 0; i < control_dim_; ++i) {
      if (term.exponents[i] == 0) continue;
      std::vector<int> lowered = term.exponents;
      --lowered[i];
      const double c = term.exponents[i] * monomial(lowered, u);
      if (c != 0.0) out.col(i).noalias() += c * (term.coeff * rho);
    }
  }
  return out;
}

}  // namespace pft
