#include "pftransport/dynamics.hpp"

#include <cmath>
#include <sstream>

namespace pft {

namespace {

void require_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite input");
}

Matrix central_difference_jacobian(const VectorField& f, const Vector& x) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return jac;
}

// Velocity and velocity gradient of a unit +z torque at `center`.
Eigen::Vector2d unit_rotlet(const Eigen::Vector2d& d) {
  const double r = d.norm();
  const double r3 = r * r * r;
  return Eigen::Vector2d(-d.y() / r3, d.x() / r3);
}

Eigen::Matrix2d unit_rotlet_gradient(const Eigen::Vector2d& d) {
  const double r2 = d.squaredNorm();
  const double r = std::sqrt(r2);
  const double r3 = r2 * r;
  const double r5 = r3 * r2;
  Eigen::Matrix2d j;
  j(0, 0) = 3.0 * d.x() * d.y() / r5;
  j(0, 1) = -1.0 / r3 + 3.0 * d.y() * d.y() / r5;
  j(1, 0) = 1.0 / r3 - 3.0 * d.x() * d.x() / r5;
  j(1, 1) = -3.0 * d.x() * d.y() / r5;
  return j;
}

Eigen::Vector2d offset_from_rotor(const Vector& x, const RotorConfig& rotors, int i) {
  const Eigen::Vector2d d = Eigen::Vector2d(x[0], x[1]) - rotors.positions[i];
  if (d.norm() < rotors.exclusion_radius) {
    std::ostringstream os;
    os << "rotlet: point (" << x[0] << ", " << x[1] << ") within exclusion radius of rotor " << i;
    throw SingularityError(os.str());
  }
  return d;
}

}  // namespace

Vector ControlAffineSystem::evaluate(const Vector& x, const Vector& u) const {
  Vector dx = drift(x);
  for (int i = 0; i < control_dim; ++i) {
    if (u[i] != 0.0) dx += u[i] * control_fields[i](x);
  }
  return dx;
}

Matrix ControlAffineSystem::field_jacobian(const Vector& x, const Vector& u) const {
  Matrix jac = drift_jacobian ? drift_jacobian(x) : central_difference_jacobian(drift, x);
  for (int i = 0; i < control_dim; ++i) {
    if (u[i] == 0.0) continue;
    const bool analytic = i < static_cast<int>(control_jacobians.size()) && control_jacobians[i];
    jac += u[i] * (analytic ? control_jacobians[i](x)
                            : central_difference_jacobian(control_fields[i], x));
  }
  return jac;
}

Matrix ControlAffineSystem::control_matrix(const Vector& x) const {
  Matrix g(state_dim, control_dim);
  for (int i = 0; i < control_dim; ++i) g.col(i) = control_fields[i](x);
  return g;
}

void ControlAffineSystem::validate() const {
  require(state_dim > 0, "system: state_dim must be positive");
  require(control_dim >= 0, "system: control_dim must be nonnegative");
  require(static_cast<bool>(drift), "system: missing drift");
  require(static_cast<int>(control_fields.size()) == control_dim,
          "system: control field count does not match control_dim");
  for (const auto& g : control_fields) require(static_cast<bool>(g), "system: null control field");
}

void RotorConfig::validate() const {
  require(!positions.empty(), "rotors: at least one rotor required");
  require(exclusion_radius > 0.0, "rotors: exclusion radius must be positive");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    require(positions[i].allFinite(), "rotors: non-finite position");
    for (std::size_t j = 0; j < i; ++j) {
      require((positions[i] - positions[j]).norm() > 0.0, "rotors: coincident rotor positions");
    }
  }
}

RotorConfig RotorConfig::default_pair() {
  RotorConfig cfg;
  cfg.positions = {Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(1.0, 0.0)};
  return cfg;
}

Vector duffing_field(const Vector& x, double u) {
  require(x.size() == 2, "duffing: state must be 2-dimensional");
  require_finite(x, "duffing");
  if (!std::isfinite(u)) throw InvalidArgument("duffing: non-finite control");
  Vector dx(2);
  dx << x[1], x[0] - x[0] * x[0] * x[0] + u;
  return dx;
}

Vector rotlet_field(const Vector& x, const Vector& torques, const RotorConfig& rotors) {
  require(x.size() == 2, "rotlet: state must be 2-dimensional");
  require(torques.size() == rotors.count(), "rotlet: torque count must match rotor count");
  require_finite(x, "rotlet");
  Eigen::Vector2d v = Eigen::Vector2d::Zero();
  for (int i = 0; i < rotors.count(); ++i) {
    v += torques[i] * unit_rotlet(offset_from_rotor(x, rotors, i));
  }
  return v;
}

ControlAffineSystem make_duffing_system() {
  ControlAffineSystem sys;
  sys.name = "duffing";
  sys.state_dim = 2;
  sys.control_dim = 1;
  sys.drift = [](const Vector& x) { return duffing_field(x, 0.0); };
  sys.control_fields = {[](const Vector& x) {
    require_finite(x, "duffing");
    return Vector(Eigen::Vector2d(0.0, 1.0));
  }};
  sys.drift_jacobian = [](const Vector& x) {
    Matrix j(2, 2);
    j << 0.0, 1.0, 1.0 - 3.0 * x[0] * x[0], 0.0;
    return j;
  };
  sys.control_jacobians = {[](const Vector&) { return Matrix(Matrix::Zero(2, 2)); }};
  return sys;
}

ControlAffineSystem make_rotlet_system(const RotorConfig& rotors) {
  rotors.validate();
  ControlAffineSystem sys;
  sys.name = "rotlet";
  sys.state_dim = 2;
  sys.control_dim = rotors.count();
  sys.drift = [](const Vector& x) {
    require_finite(x, "rotlet");
    return Vector(Vector::Zero(2));
  };
  sys.drift_jacobian = [](const Vector&) { return Matrix(Matrix::Zero(2, 2)); };
  for (int i = 0; i < rotors.count(); ++i) {
    sys.control_fields.push_back([rotors, i](const Vector& x) {
      require_finite(x, "rotlet");
      return Vector(unit_rotlet(offset_from_rotor(x, rotors, i)));
    });
    sys.control_jacobians.push_back([rotors, i](const Vector& x) {
      return Matrix(unit_rotlet_gradient(offset_from_rotor(x, rotors, i)));
    });
  }
  return sys;
}

ControlAffineSystem make_linear_system(const Matrix& a, const Matrix& b) {
  require(a.rows() == a.cols(), "linear system: A must be square");
  require(b.rows() == a.rows(), "linear system: B row count must match A");
  ControlAffineSystem sys;
  sys.name = "linear";
  sys.state_dim = static_cast<int>(a.rows());
  sys.control_dim = static_cast<int>(b.cols());
  sys.drift = [a](const Vector& x) { return Vector(a * x); };
  sys.drift_jacobian = [a](const Vector&) { return a; };
  for (Eigen::Index i = 0; i < b.cols(); ++i) {
    Vector col = b.col(i);
    sys.control_fields.push_back([col](const Vector&) { return col; });
    sys.control_jacobians.push_back(
        [n = a.rows()](const Vector&) { return Matrix(Matrix::Zero(n, n)); });
  }
  return sys;
}

Vector rk4_step(const VectorField& f, const Vector& x, double dt) {
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * dt * k1);
  const Vector k3 = f(x + 0.5 * dt * k2);
  const Vector k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector rk4_step(const ControlAffineSystem& sys, const Vector& x, const Vector& u, double dt) {
  return rk4_step([&](const Vector& y) { return sys.evaluate(y, u); }, x, dt);
}

void rk4_step_jacobians(const ControlAffineSystem& sys, const Vector& x, const Vector& u,
                        double dt, Matrix& jac_x, Matrix& jac_u) {
  const int n = sys.state_dim;
  const int m = sys.control_dim;
  // Each stage k_s = f(y_s, u) with y_s = x + c_s dt k_{s-1}; track dk_s/dx, dk_s/du.
  const Vector k1 = sys.evaluate(x, u);
  const Matrix a1 = sys.field_jacobian(x, u);
  const Matrix dk1x = a1;
  const Matrix dk1u = sys.control_matrix(x);

  const Vector y2 = x + 0.5 * dt * k1;
  const Vector k2 = sys.evaluate(y2, u);
  const Matrix a2 = sys.field_jacobian(y2, u);
  const Matrix dk2x = a2 * (Matrix::Identity(n, n) + 0.5 * dt * dk1x);
  const Matrix dk2u = a2 * (0.5 * dt * dk1u) + sys.control_matrix(y2);

  const Vector y3 = x + 0.5 * dt * k2;
  const Vector k3 = sys.evaluate(y3, u);
  const Matrix a3 = sys.field_jacobian(y3, u);
  const Matrix dk3x = a3 * (Matrix::Identity(n, n) + 0.5 * dt * dk2x);
  const Matrix dk3u = a3 * (0.5 * dt * dk2u) + sys.control_matrix(y3);

  const Vector y4 = x + dt * k3;
  const Matrix a4 = sys.field_jacobian(y4, u);
  const Matrix dk4x = a4 * (Matrix::Identity(n, n) + dt * dk3x);
  const Matrix dk4u = a4 * (dt * dk3u) + sys.control_matrix(y4);

  jac_x = Matrix::Identity(n, n) + (dt / 6.0) * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x);
  jac_u = (dt / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u);
  if (m == 0) jac_u.resize(n, 0);
}

RowMatrix integrate(const ControlAffineSystem& sys, const Vector& x0, const RowMatrix& controls,
                    double dt, int steps) {
  sys.validate();
  require(dt > 0.0, "integrate: dt must be positive");
  require(steps >= 0, "integrate: steps must be nonnegative");
  require(x0.size() == sys.state_dim, "integrate: initial state has wrong dimension");
  require_finite(x0, "integrate");
  const bool zero_controls = controls.size() == 0;
  if (!zero_controls) {
    require(controls.cols() == sys.control_dim, "integrate: control width mismatch");
    require(controls.rows() >= steps, "integrate: fewer control rows than steps");
    require(controls.allFinite(), "integrate: non-finite controls");
  }

  RowMatrix traj(steps + 1, sys.state_dim);
  traj.row(0) = x0.transpose();
  Vector x = x0;
  const Vector u_zero = Vector::Zero(sys.control_dim);
  for (int t = 0; t < steps; ++t) {
    const Vector u = zero_controls ? u_zero : Vector(controls.row(t).transpose());
    try {
      x = rk4_step(sys, x, u, dt);
    } catch (const InvalidArgument&) {
      throw DivergenceError("integrate: non-finite state", t);
    }
    if (!x.allFinite()) throw DivergenceError("integrate: non-finite state", t);
    traj.row(t + 1) = x.transpose();
  }
  return traj;
}

}  // namespace pft
