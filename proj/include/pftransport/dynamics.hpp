#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pftransport/common.hpp"

namespace pft {

using VectorField = std::function<Vector(const Vector&)>;
using JacobianField = std::function<Matrix(const Vector&)>;

/// x' = f(x) + sum_i g_i(x) u_i.
///
/// Jacobians are optional; when absent, `field_jacobian` falls back to
/// central differences of the corresponding field.
struct ControlAffineSystem {
  std::string name;
  int state_dim = 0;
  int control_dim = 0;
  VectorField drift;
  std::vector<VectorField> control_fields;
  JacobianField drift_jacobian;
  std::vector<JacobianField> control_jacobians;

  /// f(x) + sum_i u_i g_i(x).
  Vector evaluate(const Vector& x, const Vector& u) const;

  /// d/dx [f(x) + sum_i u_i g_i(x)].
  Matrix field_jacobian(const Vector& x, const Vector& u) const;

  /// Columns g_1(x) ... g_nc(x).
  Matrix control_matrix(const Vector& x) const;

  /// Throws InvalidArgument if the field callbacks are missing or the
  /// control field count does not match control_dim.
  void validate() const;
};

/// Planar rotor (rotlet) locations. Torques are the controls.
struct RotorConfig {
  std::vector<Eigen::Vector2d> positions;
  /// Evaluating the field closer than this to a rotor is an error.
  double exclusion_radius = 0.05;

  int count() const { return static_cast<int>(positions.size()); }
  void validate() const;
  static RotorConfig default_pair();
};

/// Forced Duffing oscillator: (x2, x1 - x1^3 + u).
Vector duffing_field(const Vector& x, double u);

/// Planar velocity of N_r point torques T_i along +z:
/// sum_i T_i z x (x - c_i) / |x - c_i|^3.
Vector rotlet_field(const Vector& x, const Vector& torques, const RotorConfig& rotors);

ControlAffineSystem make_duffing_system();
ControlAffineSystem make_rotlet_system(const RotorConfig& rotors);

/// Linear system x' = A x + B u (used for oracles and tests).
ControlAffineSystem make_linear_system(const Matrix& a, const Matrix& b);

/// One classical RK4 step of an autonomous field.
Vector rk4_step(const VectorField& f, const Vector& x, double dt);

/// One classical RK4 step of a control-affine system with u held constant.
Vector rk4_step(const ControlAffineSystem& sys, const Vector& x, const Vector& u, double dt);

/// Jacobians of the RK4 step map with respect to state and control,
/// propagated through the four stages by the chain rule.
void rk4_step_jacobians(const ControlAffineSystem& sys, const Vector& x, const Vector& u,
                        double dt, Matrix& jac_x, Matrix& jac_u);

/// Fixed-step RK4 with zero-order-hold controls. Row t of `controls` is
/// applied during step t; `controls` may be empty when control_dim is 0 or
/// for an uncontrolled run (treated as zeros). Returns (steps+1) x d states.
RowMatrix integrate(const ControlAffineSystem& sys, const Vector& x0, const RowMatrix& controls,
                    double dt, int steps);

}  // namespace pft
