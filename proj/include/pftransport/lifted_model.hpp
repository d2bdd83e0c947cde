#pragma once

#include <memory>
#include <vector>

#include "pftransport/edmd.hpp"

namespace pft {

enum class StepScheme { kRk4, kExpm };

/// One row per timestep: states (H+1) x n, controls H x n_c, outputs (H+1) x p.
struct Trajectory {
  RowMatrix states;
  RowMatrix controls;
  RowMatrix outputs;
  double dt = 0.0;

  int horizon() const { return static_cast<int>(controls.rows()); }
};

using LiftedTrajectory = Trajectory;

/// (L0 + sum_i u_i B_i) rho.
Vector lifted_derivative(const GeneratorModel& model, const Vector& rho, const Vector& u);

/// exp(M dt) v by a scaled Taylor series run to convergence (|term| below
/// machine precision relative to the partial sum).
Vector expm_action(const GeneratorModel& model, const Vector& u, double dt, const Vector& v);

/// Discrete step rho_{t+1} = F(rho_t, u_t) with u held over [t, t+dt).
Vector lifted_step(const GeneratorModel& model, const Vector& rho, const Vector& u, double dt,
                   StepScheme scheme = StepScheme::kRk4);

/// Iterates lifted_step over the rows of `controls`; outputs are C rho_t.
/// Throws DivergenceError carrying the step index on a non-finite state.
LiftedTrajectory rollout(const GeneratorModel& model, const Vector& rho0, const RowMatrix& controls,
                         double dt, StepScheme scheme = StepScheme::kRk4);

/// The RK4 step of the frozen bilinear system expanded as a polynomial in u:
///   F(rho, u) = sum_alpha u^alpha Q_alpha rho,  |alpha| <= 4.
/// Precomputing the Q_alpha turns the state Jacobian dF/drho into a short
/// linear combination and dF/du into a few matrix-vector products.
class Rk4StepPolynomial {
 public:
  Rk4StepPolynomial(const GeneratorModel& model, double dt);

  int control_dim() const { return control_dim_; }
  std::size_t term_count() const { return terms_.size(); }

  /// dF/drho at u (k x k).
  void state_jacobian(const Vector& u, Matrix& out) const;
  /// dF/du at (rho, u) (k x n_c).
  Matrix control_jacobian(const Vector& rho, const Vector& u) const;

 private:
  struct Term {
    std::vector<int> exponents;  // length n_c
    Matrix coeff;
  };
  static double monomial(const std::vector<int>& e, const Vector& u);

  int control_dim_ = 0;
  std::vector<Term> terms_;
};

}  // namespace pft
