#include "pftransport/edmd.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace pft {

namespace {

std::string describe_point(const Vector& x) {
  std::ostringstream os;
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ")";
  return os.str();
}

// Flow every column of `x` by dt; columns marked false in `keep` are skipped
// and set to NaN. Singular flows clear `keep` when tolerated.
Matrix flow_columns(const VectorField& field, const Matrix& x, double dt,
                    const SnapshotOptions& options, std::vector<char>& keep) {
  require(dt > 0.0, "collect_snapshots: dt must be positive");
  require(options.substeps >= 1, "collect_snapshots: substeps must be >= 1");
  const double h = dt / options.substeps;
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!keep[j]) {
      y.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    Vector s = x.col(j);
    bool finite = true;
    try {
      for (int i = 0; i < options.substeps && finite; ++i) {
        s = rk4_step(field, s, h);
        finite = s.allFinite();
      }
    } catch (const SingularityError&) {
      if (!options.drop_singular) throw;
      keep[j] = 0;
      y.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    } catch (const InvalidArgument&) {
      finite = false;  // a stage left the field's finite domain
    }
    if (!finite) {
      throw DivergenceError("collect_snapshots: non-finite flow from initial condition " +
                                describe_point(x.col(j)),
                            j);
    }
    y.col(j) = s;
  }
  return y;
}

Matrix select_columns(const Matrix& m, const std::vector<char>& keep) {
  long n = 0;
  for (char k : keep) n += k ? 1 : 0;
  Matrix out(m.rows(), n);
  long c = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (keep[j]) out.col(c++) = m.col(j);
  return out;
}

}  // namespace

SnapshotSet collect_snapshots(const VectorField& field, const GridSpec& ic_grid, double dt,
                              SnapshotOptions options) {
  const Matrix x = grid_points(ic_grid);
  std::vector<char> keep(x.cols(), 1);
  const Matrix y = flow_columns(field, x, dt, options, keep);
  SnapshotSet s;
  s.x = select_columns(x, keep);
  s.y = select_columns(y, keep);
  s.dt = dt;
  s.dropped = x.cols() - s.x.cols();
  return s;
}

EdmdEstimator::EdmdEstimator(std::shared_ptr<const Dictionary> dict, Matrix x_points,
                             EdmdOptions options)
    : dict_(std::move(dict)), options_(options) {
  require(dict_ != nullptr, "edmd: null dictionary");
  require(x_points.cols() >= 1, "edmd: need at least one snapshot");
  require(options_.regularization >= 0.0, "edmd: regularization must be nonnegative");
  psi_x_ = dict_->evaluate_columns(x_points);
  const Eigen::Index k = psi_x_.rows();
  gram_.noalias() = psi_x_ * psi_x_.transpose();

  use_pinv_ = options_.regularization == 0.0;
  if (use_pinv_) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_);
    const Vector& ev = eig.eigenvalues();
    const double top = ev.cwiseAbs().maxCoeff();
    const double cutoff = options_.pinv_cutoff * top;
    Vector inv = Vector::Zero(k);
    long rank = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (ev[i] > cutoff) {
        inv[i] = 1.0 / ev[i];
        ++rank;
      }
    }
    pinv_ = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    const double bottom = std::max(ev.minCoeff(), 0.0);
    diag_.condition = bottom > 0.0 ? top / bottom : std::numeric_limits<double>::infinity();
    diag_.rank = rank;
  } else {
    Matrix reg = gram_;
    reg.diagonal().array() += options_.regularization * gram_.trace() / static_cast<double>(k);
    llt_.compute(reg);
    if (llt_.info() != Eigen::Success) throw NumericalError("edmd: regularized Gram not SPD");
    const Eigen::LLT<Matrix> raw(gram_);
    const double rc = raw.info() == Eigen::Success ? raw.rcond() : 0.0;
    diag_.condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    diag_.rank = k;
  }
  diag_.rank_deficient = !(diag_.condition <= options_.max_condition);
  if (diag_.rank_deficient && options_.strict) {
    std::ostringstream os;
    os << "edmd: Gram condition number " << diag_.condition << " exceeds bound "
       << options_.max_condition;
    throw NumericalError(os.str());
  }
}

Matrix EdmdEstimator::solve(const Matrix& rhs) const {
  if (use_pinv_) return pinv_ * rhs;
  return llt_.solve(rhs);
}

Matrix EdmdEstimator::pf_matrix(const Matrix& y_points) const {
  require(y_points.cols() == psi_x_.cols(), "edmd: snapshot count mismatch");
  const Matrix psi_y = dict_->evaluate_columns(y_points);
  return solve(psi_y * psi_x_.transpose());
}

Matrix EdmdEstimator::koopman_matrix(const Matrix& y_points) const {
  require(y_points.cols() == psi_x_.cols(), "edmd: snapshot count mismatch");
  const Matrix psi_y = dict_->evaluate_columns(y_points);
  return solve(psi_x_ * psi_y.transpose());
}

Matrix estimate_pf_matrix(const SnapshotSet& snapshots, std::shared_ptr<const Dictionary> dict,
                          EdmdOptions options) {
  require(snapshots.x.cols() == snapshots.y.cols(), "edmd: X and Y shapes differ");
  return EdmdEstimator(std::move(dict), snapshots.x, options).pf_matrix(snapshots.y);
}

Matrix estimate_koopman_matrix(const SnapshotSet& snapshots,
                               std::shared_ptr<const Dictionary> dict, EdmdOptions options) {
  require(snapshots.x.cols() == snapshots.y.cols(), "edmd: X and Y shapes differ");
  return EdmdEstimator(std::move(dict), snapshots.x, options).koopman_matrix(snapshots.y);
}

Matrix generator_from_pf(const Matrix& pf, double dt) {
  require(dt > 0.0, "generator_from_pf: dt must be positive");
  require(pf.rows() == pf.cols(), "generator_from_pf: P must be square");
  Matrix l = pf;
  l.diagonal().array() -= 1.0;
  return l / dt;
}

void GeneratorModel::validate() const {
  require(dictionary != nullptr, "model: null dictionary");
  const Eigen::Index k = l0.rows();
  require(k == dictionary->size() && l0.cols() == k, "model: L0 must be k x k");
  require(l0.allFinite(), "model: non-finite L0");
  for (const auto& bi : b) {
    require(bi.rows() == k && bi.cols() == k, "model: B_i must be k x k");
    require(bi.allFinite(), "model: non-finite B_i");
  }
  require(c.cols() == k && c.allFinite(), "model: C must be finite with k columns");
  require(dt_data > 0.0, "model: dt_data must be positive");
}

GeneratorModel build_generator_model(const ControlAffineSystem& sys,
                                     std::shared_ptr<const Dictionary> dict,
                                     const GridSpec& ic_grid, double dt,
                                     ModelBuildOptions options) {
  sys.validate();
  require(dict != nullptr, "build_generator_model: null dictionary");
  require(dict->dim() == sys.state_dim, "build_generator_model: dictionary/state dimension mismatch");

  // All fields share one set of initial points so the Gram factorization is
  // reused; a point that is singular for any field is dropped for all.
  const Matrix x_all = grid_points(ic_grid);
  std::vector<char> keep(x_all.cols(), 1);
  const bool central = options.control_difference == GeneratorDifference::kCentral;
  std::vector<VectorField> fields{sys.drift};
  for (const auto& g : sys.control_fields) {
    fields.push_back(g);
    if (central) fields.push_back([g](const Vector& x) -> Vector { return -g(x); });
  }
  std::vector<Matrix> flows;
  for (const auto& f : fields) flows.push_back(flow_columns(f, x_all, dt, options.snapshots, keep));

  const EdmdEstimator estimator(dict, select_columns(x_all, keep), options.edmd);
  GeneratorModel model;
  model.dictionary = dict;
  model.dt_data = dt;
  model.l0 = generator_from_pf(estimator.pf_matrix(select_columns(flows[0], keep)), dt);
  const std::size_t stride = central ? 2 : 1;
  for (std::size_t i = 1; i < flows.size(); i += stride) {
    const Matrix pf = estimator.pf_matrix(select_columns(flows[i], keep));
    if (central) {
      // (P(g) - P(-g)) / 2dt: the O(dt) term of the one-sided quotient cancels.
      const Matrix pf_back = estimator.pf_matrix(select_columns(flows[i + 1], keep));
      model.b.push_back((pf - pf_back) / (2.0 * dt));
    } else {
      model.b.push_back(generator_from_pf(pf, dt));
    }
  }
  model.c = moment_matrix(*dict);
  model.validate();
  return model;
}

Matrix estimate_generator(const VectorField& field, std::shared_ptr<const Dictionary> dict,
                          const GridSpec& ic_grid, double dt, ModelBuildOptions options) {
  const SnapshotSet snaps = collect_snapshots(field, ic_grid, dt, options.snapshots);
  return generator_from_pf(estimate_pf_matrix(snaps, std::move(dict), options.edmd), dt);
}

}  // namespace pft
