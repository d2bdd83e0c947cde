#include "pftransport/ddp.hpp"

#include <cmath>
#include <iostream>

namespace pft {

namespace {

// F with F^T F = 2 M for a symmetric PSD weight M; zero rows dropped.
Matrix weight_factor(const Matrix& m) {
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(2.0 * m);
  const Vector& ev = eig.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > 1e-15 * top && ev[i] > 0.0) keep.push_back(i);
  Matrix f(keep.size(), m.cols());
  for (std::size_t j = 0; j < keep.size(); ++j)
    f.row(j) = std::sqrt(ev[keep[j]]) * eig.eigenvectors().col(keep[j]).transpose();
  return f;
}

bool is_psd(const Matrix& m) {
  if (!m.isApprox(m.transpose(), 1e-12) && !(m - m.transpose()).isZero(1e-14)) return false;
  if (m.size() == 0) return true;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const double top = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  return eig.eigenvalues().minCoeff() >= -1e-12 * top;
}

// Replace W by a matrix with fewer rows and the same W^T W (up to the
// dropped directions below `tol` relative to the leading Gram eigenvalue).
void compress_value_factor(Matrix& w, double tol) {
  if (w.rows() == 0) return;
  if (w.rows() > w.cols()) {
    // Exact: W = QR, W^T W = R^T R.
    Eigen::HouseholderQR<Matrix> qr(w);
    w = qr.matrixQR().topRows(w.cols()).triangularView<Eigen::Upper>();
  }
  if (tol <= 0.0) return;
  Matrix gram;
  gram.noalias() = w * w.transpose();
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const Vector& ev = eig.eigenvalues();  // ascending
  const double top = ev[ev.size() - 1];
  if (!(top > 0.0)) {
    w.resize(0, w.cols());
    return;
  }
  Eigen::Index first = 0;
  while (first < ev.size() && ev[first] <= tol * top) ++first;
  const Eigen::Index kept = ev.size() - first;
  Matrix reduced(kept, w.cols());
  reduced.noalias() = eig.eigenvectors().rightCols(kept).transpose() * w;
  w = std::move(reduced);
}

double quad(const Vector& e, const Matrix& m) { return e.dot(m * e); }

}  // namespace

LiftedDynamics::LiftedDynamics(std::shared_ptr<const GeneratorModel> model, double dt)
    : model_(std::move(model)), dt_(dt), poly_(*model_, dt) {}

Vector LiftedDynamics::step(const Vector& x, const Vector& u) const {
  return lifted_step(*model_, x, u, dt_, StepScheme::kRk4);
}

void LiftedDynamics::linearize(const Vector& x, const Vector& u, Matrix& a, Matrix& b) const {
  poly_.state_jacobian(u, a);
  b = poly_.control_jacobian(x, u);
}

StateDynamics::StateDynamics(ControlAffineSystem sys, double dt)
    : sys_(std::move(sys)), dt_(dt), identity_(Matrix::Identity(sys_.state_dim, sys_.state_dim)) {
  sys_.validate();
  require(dt_ > 0.0, "StateDynamics: dt must be positive");
}

Vector StateDynamics::step(const Vector& x, const Vector& u) const {
  return rk4_step(sys_, x, u, dt_);
}

void StateDynamics::linearize(const Vector& x, const Vector& u, Matrix& a, Matrix& b) const {
  rk4_step_jacobians(sys_, x, u, dt_, a, b);
}

void OcpSpec::validate() const {
  require(horizon >= 1, "ocp: horizon must be >= 1");
  require(dt > 0.0, "ocp: dt must be positive");
  const Eigen::Index p = s.rows();
  require(s.cols() == p && s_terminal.rows() == p && s_terminal.cols() == p,
          "ocp: S and S_H must be p x p");
  require(r.rows() == r.cols() && r.rows() > 0, "ocp: R must be square");
  require(is_psd(s), "ocp: S must be symmetric PSD");
  require(is_psd(s_terminal), "ocp: S_H must be symmetric PSD");
  require((r - r.transpose()).isZero(1e-14 * std::max(1.0, r.norm())), "ocp: R must be symmetric");
  require(Eigen::LLT<Matrix>(r).info() == Eigen::Success, "ocp: R must be positive definite");
  require(y_ref.rows() == horizon + 1 && y_ref.cols() == p, "ocp: y_ref must be (H+1) x p");
  require(y_ref.allFinite(), "ocp: non-finite reference");
  if (u_init.size() != 0) {
    require(u_init.rows() == horizon && u_init.cols() == r.rows(), "ocp: u_init must be H x n_c");
    require(u_init.allFinite(), "ocp: non-finite initial controls");
  }
}

RowMatrix constant_reference(const Vector& y, int horizon) {
  RowMatrix ref(horizon + 1, y.size());
  ref.rowwise() = y.transpose();
  return ref;
}

Trajectory simulate(const DiscreteDynamics& dyn, const Vector& x0, const RowMatrix& controls,
                    double dt) {
  require(x0.size() == dyn.state_dim(), "simulate: x0 has wrong dimension");
  require(controls.cols() == dyn.control_dim(), "simulate: control width mismatch");
  const Matrix& c = dyn.output_matrix();
  const Eigen::Index h = controls.rows();
  Trajectory traj;
  traj.dt = dt;
  traj.controls = controls;
  traj.states.resize(h + 1, x0.size());
  traj.outputs.resize(h + 1, c.rows());
  Vector x = x0;
  traj.states.row(0) = x.transpose();
  traj.outputs.row(0) = (c * x).transpose();
  for (Eigen::Index t = 0; t < h; ++t) {
    x = dyn.step(x, controls.row(t).transpose());
    if (!x.allFinite()) throw DivergenceError("simulate: non-finite state", t);
    traj.states.row(t + 1) = x.transpose();
    traj.outputs.row(t + 1) = (c * x).transpose();
  }
  return traj;
}

double total_cost(const OcpSpec& spec, const Trajectory& traj) {
  const int h = spec.horizon;
  require(traj.outputs.rows() == h + 1 && traj.outputs.cols() == spec.output_dim(),
          "total_cost: output trajectory shape mismatch");
  require(traj.controls.rows() == h && traj.controls.cols() == spec.control_dim(),
          "total_cost: control trajectory shape mismatch");
  double j = 0.0;
  for (int t = 0; t < h; ++t) j += quad(traj.controls.row(t).transpose(), spec.r);
  for (int t = 1; t < h; ++t)
    j += quad((traj.outputs.row(t) - spec.y_ref.row(t)).transpose(), spec.s);
  j += quad((traj.outputs.row(h) - spec.y_ref.row(h)).transpose(), spec.s_terminal);
  return j;
}

RowMatrix cost_gradient(const DiscreteDynamics& dyn, const OcpSpec& spec, const Trajectory& traj) {
  const int h = spec.horizon;
  const Matrix& c = dyn.output_matrix();
  RowMatrix grad(h, dyn.control_dim());
  Vector lambda = 2.0 * c.transpose() *
                  (spec.s_terminal * (traj.outputs.row(h) - spec.y_ref.row(h)).transpose());
  Matrix a, b;
  for (int t = h - 1; t >= 0; --t) {
    const Vector x = traj.states.row(t).transpose();
    const Vector u = traj.controls.row(t).transpose();
    dyn.linearize(x, u, a, b);
    grad.row(t) = (2.0 * spec.r * u + b.transpose() * lambda).transpose();
    Vector next = a.transpose() * lambda;
    if (t >= 1) {
      next += 2.0 * c.transpose() * (spec.s * (traj.outputs.row(t) - spec.y_ref.row(t)).transpose());
    }
    lambda = std::move(next);
  }
  return grad;
}

BackwardPassResult backward_pass(const DiscreteDynamics& dyn, const OcpSpec& spec,
                                 const Trajectory& traj, double reg,
                                 const BackwardPassOptions& options) {
  require(reg >= 0.0, "backward_pass: reg must be nonnegative");
  const int h = spec.horizon;
  const int n = dyn.state_dim();
  const int m = dyn.control_dim();
  const Matrix& c = dyn.output_matrix();
  require(traj.states.rows() == h + 1 && traj.states.cols() == n,
          "backward_pass: state trajectory shape mismatch");

  const Matrix stage_rows = weight_factor(spec.s) * c;
  const Matrix control_factor = weight_factor(spec.r);

  BackwardPassResult res;
  res.k_ff.resize(h, m);
  res.k_fb.assign(h, Matrix());

  // Value function V(x) ~ V_x^T dx + 1/2 dx^T W^T W dx.
  Vector vx = 2.0 * c.transpose() *
              (spec.s_terminal * (traj.outputs.row(h) - spec.y_ref.row(h)).transpose());
  Matrix w = weight_factor(spec.s_terminal) * c;
  Eigen::Index rows_at_compress = w.rows();

  Matrix a, b, wa, wb;
  for (int t = h - 1; t >= 0; --t) {
    const Vector x = traj.states.row(t).transpose();
    const Vector u = traj.controls.row(t).transpose();
    dyn.linearize(x, u, a, b);

    wa.noalias() = w * a;
    wb.noalias() = w * b;
    Vector qx = a.transpose() * vx;
    if (t >= 1) {
      qx += 2.0 * c.transpose() * (spec.s * (traj.outputs.row(t) - spec.y_ref.row(t)).transpose());
    }
    const Vector qu = 2.0 * spec.r * u + b.transpose() * vx;
    Matrix quu = 2.0 * spec.r;
    quu.noalias() += wb.transpose() * wb;
    Matrix qux(m, n);
    qux.noalias() = wb.transpose() * wa;

    Matrix quu_reg = quu;
    quu_reg.diagonal().array() += reg;
    const Eigen::LLT<Matrix> llt(quu_reg);
    if (llt.info() != Eigen::Success) {
      res.ok = false;
      res.failed_step = t;
      return res;
    }
    const Vector kff = -llt.solve(qu);
    const Matrix kfb = -llt.solve(qux);
    res.k_ff.row(t) = kff.transpose();
    res.d1 += kff.dot(qu);
    res.d2 += 0.5 * kff.dot(quu * kff);

    vx = qx + kfb.transpose() * (quu * kff) + kfb.transpose() * qu + qux.transpose() * kff;

    // Joseph form: V_xx = lxx + (W A + W B K)^T (W A + W B K) + K^T 2R K.
    const Eigen::Index stage = t >= 1 ? stage_rows.rows() : 0;
    Matrix next(stage + wa.rows() + control_factor.rows(), n);
    if (stage > 0) next.topRows(stage) = stage_rows;
    next.middleRows(stage, wa.rows()) = wa;
    next.middleRows(stage, wa.rows()).noalias() += wb * kfb;
    next.bottomRows(control_factor.rows()).noalias() = control_factor * kfb;
    w = std::move(next);
    if (w.rows() > n || w.rows() >= rows_at_compress + options.compress_interval) {
      compress_value_factor(w, options.value_rank_tol);
      rows_at_compress = w.rows();
    }
    res.max_value_rank = std::max(res.max_value_rank, static_cast<int>(w.rows()));
    res.k_fb[t] = kfb;
  }
  res.ok = true;
  return res;
}

ForwardPassResult forward_pass(const DiscreteDynamics& dyn, const OcpSpec& spec,
                               const Trajectory& nominal, const BackwardPassResult& gains,
                               double alpha) {
  const int h = spec.horizon;
  const Matrix& c = dyn.output_matrix();
  ForwardPassResult out;
  Trajectory& traj = out.traj;
  traj.dt = nominal.dt;
  traj.states.resize(h + 1, nominal.states.cols());
  traj.controls.resize(h, nominal.controls.cols());
  traj.outputs.resize(h + 1, c.rows());
  Vector x = nominal.states.row(0).transpose();
  traj.states.row(0) = x.transpose();
  traj.outputs.row(0) = (c * x).transpose();
  try {
    for (int t = 0; t < h; ++t) {
      Vector u = nominal.controls.row(t).transpose() + alpha * gains.k_ff.row(t).transpose();
      u.noalias() += gains.k_fb[t] * (x - nominal.states.row(t).transpose());
      if (!u.allFinite()) return out;
      traj.controls.row(t) = u.transpose();
      x = dyn.step(x, u);
      if (!x.allFinite()) return out;
      traj.states.row(t + 1) = x.transpose();
      traj.outputs.row(t + 1) = (c * x).transpose();
    }
  } catch (const SingularityError&) {
    return out;
  } catch (const DivergenceError&) {
    return out;
  } catch (const InvalidArgument&) {
    return out;  // a stage left the field's finite domain
  }
  out.cost = total_cost(spec, traj);
  out.ok = std::isfinite(out.cost);
  return out;
}

SolveReport solve(const DiscreteDynamics& dyn, const Vector& x0, const OcpSpec& spec,
                  const DdpOptions& options) {
  spec.validate();
  require(spec.control_dim() == dyn.control_dim(), "solve: R size must match control dimension");
  require(spec.output_dim() == dyn.output_matrix().rows(), "solve: S size must match output dimension");
  require(x0.size() == dyn.state_dim(), "solve: x0 has wrong dimension");

  const RowMatrix u0 = spec.u_init.size() != 0 ? spec.u_init
                                                : RowMatrix(RowMatrix::Zero(spec.horizon, dyn.control_dim()));
  SolveReport report;
  Trajectory traj = simulate(dyn, x0, u0, spec.dt);
  double cost = total_cost(spec, traj);
  report.cost_history.push_back(cost);

  double reg = options.reg_init;
  bool stalled = false;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const BackwardPassResult bp = backward_pass(dyn, spec, traj, reg, options.backward);
    if (!bp.ok) {
      reg *= options.reg_increase;
      if (reg > options.reg_max) {
        stalled = true;
        break;
      }
      continue;
    }
    if (bp.expected_decrease() < options.tol * (1.0 + std::abs(cost))) {
      report.converged = true;
      report.message = "expected decrease below tolerance";
      break;
    }

    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < options.line_search_steps; ++ls, alpha *= 0.5) {
      ForwardPassResult fp = forward_pass(dyn, spec, traj, bp, alpha);
      if (!fp.ok) continue;
      const double actual = cost - fp.cost;
      if (fp.cost < cost && actual >= options.accept_ratio * bp.expected_decrease(alpha)) {
        const bool small = actual < options.tol * (1.0 + std::abs(fp.cost));
        traj = std::move(fp.traj);
        cost = fp.cost;
        accepted = true;
        report.converged = small;
        break;
      }
    }
    if (options.verbose) {
      std::cerr << "ddp iter " << iter << " cost " << cost << " reg " << reg
                << (accepted ? " alpha " + std::to_string(alpha) : std::string(" rejected"))
                << " rank " << bp.max_value_rank << "\n";
    }
    if (accepted) {
      report.cost_history.push_back(cost);
      ++report.iterations;
      reg = std::max(reg / options.reg_decrease, options.reg_min);
      if (report.converged) {
        report.message = "relative cost change below tolerance";
        break;
      }
    } else {
      reg *= options.reg_increase;
      if (reg > options.reg_max) {
        stalled = true;
        break;
      }
    }
  }
  if (!report.converged) {
    report.message = stalled ? "no acceptable step at maximum regularization"
                             : "iteration limit reached";
  }
  report.controls = traj.controls;
  report.trajectory = std::move(traj);
  report.regularization_final = reg;
  return report;
}

SolveReport solve_lifted(std::shared_ptr<const GeneratorModel> model, const Vector& rho0,
                         const OcpSpec& spec, const DdpOptions& options) {
  const LiftedDynamics dyn(std::move(model), spec.dt);
  return solve(dyn, rho0, spec, options);
}

SolveReport solve_state_ddp(const ControlAffineSystem& sys, const Vector& x0, const OcpSpec& spec,
                            const DdpOptions& options) {
  const StateDynamics dyn(sys, spec.dt);
  return solve(dyn, x0, spec, options);
}

}  // namespace pft
