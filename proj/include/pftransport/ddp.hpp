#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pftransport/dynamics.hpp"
#include "pftransport/lifted_model.hpp"

namespace pft {

/// Discrete-time dynamics x_{t+1} = F(x_t, u_t) with an affine output y = C x.
class DiscreteDynamics {
 public:
  virtual ~DiscreteDynamics() = default;

  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual const Matrix& output_matrix() const = 0;
  virtual Vector step(const Vector& x, const Vector& u) const = 0;
  /// a = dF/dx, b = dF/du at (x, u).
  virtual void linearize(const Vector& x, const Vector& u, Matrix& a, Matrix& b) const = 0;
};

/// RK4 step of the lifted bilinear model; y = C rho (raw moments).
class LiftedDynamics final : public DiscreteDynamics {
 public:
  LiftedDynamics(std::shared_ptr<const GeneratorModel> model, double dt);

  int state_dim() const override { return model_->lifted_dim(); }
  int control_dim() const override { return model_->control_dim(); }
  const Matrix& output_matrix() const override { return model_->c; }
  Vector step(const Vector& x, const Vector& u) const override;
  void linearize(const Vector& x, const Vector& u, Matrix& a, Matrix& b) const override;

  const GeneratorModel& model() const { return *model_; }
  double dt() const { return dt_; }

 private:
  std::shared_ptr<const GeneratorModel> model_;
  double dt_;
  Rk4StepPolynomial poly_;
};

/// RK4 step of a control-affine ODE; y = x.
class StateDynamics final : public DiscreteDynamics {
 public:
  StateDynamics(ControlAffineSystem sys, double dt);

  int state_dim() const override { return sys_.state_dim; }
  int control_dim() const override { return sys_.control_dim; }
  const Matrix& output_matrix() const override { return identity_; }
  Vector step(const Vector& x, const Vector& u) const override;
  void linearize(const Vector& x, const Vector& u, Matrix& a, Matrix& b) const override;

 private:
  ControlAffineSystem sys_;
  double dt_;
  Matrix identity_;
};

/// Output-tracking optimal control problem:
///   J = sum_{t=0}^{H-1} u_t^T R u_t
///     + sum_{t=1}^{H-1} (y_t - r_t)^T S (y_t - r_t)
///     + (y_H - r_H)^T S_H (y_H - r_H).
/// y_0 is fixed by the initial state and carries no tracking term.
struct OcpSpec {
  int horizon = 0;
  double dt = 0.0;
  Matrix s;
  Matrix r;
  Matrix s_terminal;
  RowMatrix y_ref;   // (H+1) x p
  RowMatrix u_init;  // H x n_c; empty means zeros

  int output_dim() const { return static_cast<int>(s.rows()); }
  int control_dim() const { return static_cast<int>(r.rows()); }
  /// Throws InvalidArgument on shape, symmetry or definiteness violations.
  void validate() const;
};

/// Constant reference over the whole horizon.
RowMatrix constant_reference(const Vector& y, int horizon);

Trajectory simulate(const DiscreteDynamics& dyn, const Vector& x0, const RowMatrix& controls,
                    double dt);

double total_cost(const OcpSpec& spec, const Trajectory& traj);

/// Open-loop gradient dJ/du_t (H x n_c) by the adjoint recursion on the
/// same linearization the backward pass uses.
RowMatrix cost_gradient(const DiscreteDynamics& dyn, const OcpSpec& spec, const Trajectory& traj);

struct BackwardPassOptions {
  /// The value Hessian is carried as W^T W. Rows of W whose Gram eigenvalue
  /// falls below this fraction of the largest are dropped when compressing.
  double value_rank_tol = 1e-14;
  /// Compress once W has grown this many rows since the last compression.
  int compress_interval = 32;
};

struct BackwardPassResult {
  bool ok = false;
  int failed_step = -1;
  RowMatrix k_ff;              // H x n_c feedforward
  std::vector<Matrix> k_fb;    // H gains, n_c x n each
  double d1 = 0.0;             // sum k^T Q_u
  double d2 = 0.0;             // sum 1/2 k^T Q_uu k
  int max_value_rank = 0;

  /// Predicted cost reduction for step length alpha (>= 0 near a descent step).
  double expected_decrease(double alpha = 1.0) const { return -(alpha * d1 + alpha * alpha * d2); }
};

/// Gauss-Newton (iLQR) Riccati recursion about `traj`. Q_uu is regularized
/// by reg * I; a non-PD regularized Q_uu returns ok = false.
BackwardPassResult backward_pass(const DiscreteDynamics& dyn, const OcpSpec& spec,
                                 const Trajectory& traj, double reg,
                                 const BackwardPassOptions& options = {});

struct ForwardPassResult {
  bool ok = false;
  Trajectory traj;
  double cost = 0.0;
};

/// u_new = u + alpha k + K (x_new - x). A diverging rollout returns ok = false.
ForwardPassResult forward_pass(const DiscreteDynamics& dyn, const OcpSpec& spec,
                               const Trajectory& nominal, const BackwardPassResult& gains,
                               double alpha);

struct DdpOptions {
  int max_iter = 200;
  double tol = 1e-8;
  double reg_init = 1e-10;
  double reg_min = 1e-10;
  double reg_max = 1e10;
  double reg_increase = 10.0;
  double reg_decrease = 2.0;
  int line_search_steps = 11;     // alpha in {1, 1/2, ..., 2^-10}
  double accept_ratio = 1e-4;
  BackwardPassOptions backward;
  bool verbose = false;
};

struct SolveReport {
  RowMatrix controls;
  Trajectory trajectory;
  std::vector<double> cost_history;  // initial cost, then one entry per accepted iteration
  bool converged = false;
  int iterations = 0;
  double regularization_final = 0.0;
  std::string message;
};

SolveReport solve(const DiscreteDynamics& dyn, const Vector& x0, const OcpSpec& spec,
                  const DdpOptions& options = {});

/// Lifted moment-tracking DDP (PF-DDP).
SolveReport solve_lifted(std::shared_ptr<const GeneratorModel> model, const Vector& rho0,
                         const OcpSpec& spec, const DdpOptions& options = {});

/// The same solver on the raw state, treating x0 as a deterministic initial
/// condition; the spec's outputs are the state itself.
SolveReport solve_state_ddp(const ControlAffineSystem& sys, const Vector& x0, const OcpSpec& spec,
                            const DdpOptions& options = {});

}  // namespace pft
