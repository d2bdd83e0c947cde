#pragma once

#include <memory>
#include <vector>

#include "pftransport/basis.hpp"
#include "pftransport/dynamics.hpp"
#include "pftransport/grid.hpp"

namespace pft {

/// Paired snapshot matrices: column j of Y is the dt-flow of column j of X.
struct SnapshotSet {
  Matrix x;  // d x m
  Matrix y;  // d x m
  double dt = 0.0;
  /// Grid points skipped because the flow hit a singularity.
  long dropped = 0;

  long count() const { return x.cols(); }
};

struct SnapshotOptions {
  /// RK4 sub-steps per dt. The flow is still a dt-flow; more sub-steps only
  /// sharpen it near steep fields.
  int substeps = 1;
  /// Skip grid points whose flow enters a singularity's exclusion radius
  /// instead of failing.
  bool drop_singular = false;
};

/// Y = RK4 dt-flow of every grid point under an autonomous field.
/// Throws DivergenceError naming the initial condition if a flow is non-finite.
SnapshotSet collect_snapshots(const VectorField& field, const GridSpec& ic_grid, double dt,
                              SnapshotOptions options = {});

struct EdmdOptions {
  /// Tikhonov weight relative to trace(G)/k. Zero selects the truncated
  /// pseudoinverse.
  double regularization = 1e-10;
  /// Relative singular value cutoff for the pseudoinverse.
  double pinv_cutoff = 1e-12;
  /// Gram condition numbers above this are reported as rank deficient.
  double max_condition = 1e16;
  /// Throw NumericalError instead of only flagging rank deficiency.
  bool strict = false;
};

struct GramDiagnostics {
  double condition = 0.0;  // estimate; exact in pseudoinverse mode
  long rank = 0;           // numerical rank (pseudoinverse mode only, else k)
  bool rank_deficient = false;
};

/// Least-squares operator estimation on a fixed set of initial points.
///
/// The Gram matrix G = Psi_X Psi_X^T and its factorization are shared by
/// every field estimated against the same data grid.
class EdmdEstimator {
 public:
  EdmdEstimator(std::shared_ptr<const Dictionary> dict, Matrix x_points, EdmdOptions options = {});

  const Matrix& gram() const { return gram_; }
  const Matrix& psi_x() const { return psi_x_; }
  const GramDiagnostics& diagnostics() const { return diag_; }

  /// P = G^+ Psi_Y Psi_X^T for snapshots Y of the stored X points.
  Matrix pf_matrix(const Matrix& y_points) const;

  /// K = G^+ Psi_X Psi_Y^T (the Koopman counterpart on the same data).
  Matrix koopman_matrix(const Matrix& y_points) const;

 private:
  Matrix solve(const Matrix& rhs) const;

  std::shared_ptr<const Dictionary> dict_;
  Matrix psi_x_;
  Matrix gram_;
  EdmdOptions options_;
  GramDiagnostics diag_;
  Eigen::LLT<Matrix> llt_;
  Matrix pinv_;
  bool use_pinv_ = false;
};

/// Perron-Frobenius matrix from a snapshot set.
Matrix estimate_pf_matrix(const SnapshotSet& snapshots, std::shared_ptr<const Dictionary> dict,
                          EdmdOptions options = {});

/// Koopman matrix from a snapshot set (diagnostic / adjointness checks).
Matrix estimate_koopman_matrix(const SnapshotSet& snapshots,
                               std::shared_ptr<const Dictionary> dict, EdmdOptions options = {});

/// (P - I) / dt.
Matrix generator_from_pf(const Matrix& pf, double dt);

/// Lifted bilinear model d rho/dt = (L0 + sum_i u_i B_i) rho, y = C rho.
struct GeneratorModel {
  std::shared_ptr<const Dictionary> dictionary;
  Matrix l0;
  std::vector<Matrix> b;
  Matrix c;
  double dt_data = 0.0;

  int lifted_dim() const { return static_cast<int>(l0.rows()); }
  int control_dim() const { return static_cast<int>(b.size()); }
  int output_dim() const { return static_cast<int>(c.rows()); }
  void validate() const;
};

enum class GeneratorDifference {
  kForward,  // (P(g) - I) / dt
  kCentral,  // (P(g) - P(-g)) / (2 dt), from a second run on the reversed field
};

struct ModelBuildOptions {
  EdmdOptions edmd;
  SnapshotOptions snapshots;
  /// Quotient used for the control generators B_i. The drift generator is
  /// always the forward quotient. Central differences keep B_i free of the
  /// O(dt) bias that turns into growth when u_i changes sign on fast
  /// rotational fields.
  GeneratorDifference control_difference = GeneratorDifference::kForward;
};

/// L0 from EDMD on the drift alone, each B_i from EDMD on x' = g_i(x)
/// alone, C from the analytic moment integrals.
GeneratorModel build_generator_model(const ControlAffineSystem& sys,
                                     std::shared_ptr<const Dictionary> dict,
                                     const GridSpec& ic_grid, double dt,
                                     ModelBuildOptions options = {});

/// Generator estimated for an arbitrary autonomous field on a data grid.
Matrix estimate_generator(const VectorField& field, std::shared_ptr<const Dictionary> dict,
                          const GridSpec& ic_grid, double dt, ModelBuildOptions options = {});

}  // namespace pft
