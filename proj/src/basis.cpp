#include "pftransport/basis.hpp"

#include <cmath>
#include <numbers>

namespace pft {

Dictionary::Dictionary(Matrix centers, double width) : centers_(std::move(centers)), width_(width) {
  require(centers_.rows() > 0 && centers_.cols() > 0, "dictionary: empty center set");
  require(centers_.allFinite(), "dictionary: non-finite center");
  require(std::isfinite(width_) && width_ > 0.0, "dictionary: width must be positive");
}

double Dictionary::element_mass() const {
  return std::pow(std::numbers::pi * width_ * width_, 0.5 * dim());
}

Vector Dictionary::evaluate(const Vector& x) const {
  require(x.size() == dim(), "dictionary: point has wrong dimension");
  require(x.allFinite(), "dictionary: non-finite point");
  const double inv_w2 = 1.0 / (width_ * width_);
  return (-(centers_.rowwise() - x.transpose()).rowwise().squaredNorm() * inv_w2)
      .array()
      .exp()
      .matrix();
}

Matrix Dictionary::evaluate_columns(const Matrix& points) const {
  require(points.rows() == dim(), "dictionary: points have wrong dimension");
  require(points.allFinite(), "dictionary: non-finite point");
  const double inv_w2 = 1.0 / (width_ * width_);
  const int k = size();
  const int d = dim();
  Matrix out(k, points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (int i = 0; i < k; ++i) {
      double r2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const double diff = points(a, j) - centers_(i, a);
        r2 += diff * diff;
      }
      out(i, j) = std::exp(-r2 * inv_w2);
    }
  }
  return out;
}

nlohmann::json Dictionary::to_json() const {
  nlohmann::json centers = nlohmann::json::array();
  for (Eigen::Index i = 0; i < centers_.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index a = 0; a < centers_.cols(); ++a) row.push_back(centers_(i, a));
    centers.push_back(std::move(row));
  }
  return {{"centers", std::move(centers)}, {"width", width_}};
}

Dictionary Dictionary::from_json(const nlohmann::json& j) {
  const auto& rows = j.at("centers");
  require(rows.is_array() && !rows.empty(), "dictionary json: centers must be a non-empty array");
  const std::size_t d = rows.at(0).size();
  Matrix centers(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == d, "dictionary json: ragged centers");
    for (std::size_t a = 0; a < d; ++a) centers(i, a) = rows[i][a].get<double>();
  }
  return Dictionary(std::move(centers), j.at("width").get<double>());
}

Dictionary build_rbf_grid(const Vector& lower, const Vector& upper, int n_per_dim, double width) {
  require(n_per_dim >= 2, "build_rbf_grid: n_per_dim must be >= 2");
  require(width > 0.0, "build_rbf_grid: width must be positive");
  GridSpec grid{lower, upper, n_per_dim};
  return Dictionary(grid_points(grid).transpose(), width);
}

Matrix moment_matrix(const Dictionary& dict) {
  const int d = dict.dim();
  const int k = dict.size();
  const double mass = dict.element_mass();
  const double var = 0.5 * dict.width() * dict.width();  // per-axis variance of psi/mass
  const Matrix& c = dict.centers();
  Matrix out(moment_output_size(d), k);
  for (int a = 0; a < d; ++a) out.row(a) = mass * c.col(a).transpose();
  int row = d;
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b, ++row) {
      out.row(row) = mass * (c.col(a).array() * c.col(b).array()).matrix().transpose();
      if (a == b) out.row(row).array() += mass * var;
    }
  }
  return out;
}

Vector mass_vector(const Dictionary& dict) {
  return Vector::Constant(dict.size(), dict.element_mass());
}

Vector moments_from_mean_cov(const Vector& mean, const Matrix& cov) {
  const int d = static_cast<int>(mean.size());
  require(cov.rows() == d && cov.cols() == d, "moments: covariance shape mismatch");
  Vector y(moment_output_size(d));
  y.head(d) = mean;
  int row = d;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) y[row++] = cov(a, b) + mean[a] * mean[b];
  return y;
}

void mean_cov_from_moments(const Vector& y, int dim, Vector& mean, Matrix& cov) {
  require(y.size() == moment_output_size(dim), "moments: output vector has wrong length");
  mean = y.head(dim);
  cov.resize(dim, dim);
  int row = dim;
  for (int a = 0; a < dim; ++a) {
    for (int b = a; b < dim; ++b, ++row) {
      cov(a, b) = y[row] - mean[a] * mean[b];
      cov(b, a) = cov(a, b);
    }
  }
}

DensityCoefficients::DensityCoefficients(std::shared_ptr<const Dictionary> dict, Vector c)
    : dictionary(std::move(dict)), coeffs(std::move(c)) {
  require(dictionary != nullptr, "density coefficients: null dictionary");
  require(coeffs.size() == dictionary->size(), "density coefficients: length must equal k");
}

double DensityCoefficients::density_at(const Vector& x) const {
  return dictionary->evaluate(x).dot(coeffs);
}

double gaussian_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Eigen::LLT<Matrix> llt(cov);
  require(llt.info() == Eigen::Success, "gaussian_pdf: covariance not SPD");
  const Vector z = llt.matrixL().solve(x - mean);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double d = static_cast<double>(mean.size());
  return std::exp(-0.5 * z.squaredNorm() - 0.5 * log_det - 0.5 * d * std::log(2.0 * std::numbers::pi));
}

GridSpec default_quadrature_grid(const Dictionary& dict, int n_per_dim) {
  return GridSpec{dict.centers().colwise().minCoeff().transpose(),
                  dict.centers().colwise().maxCoeff().transpose(), n_per_dim};
}

ProjectionResult project_gaussian(std::shared_ptr<const Dictionary> dict, const Vector& mean,
                                  const Matrix& cov, ProjectionOptions options) {
  require(dict != nullptr, "project_gaussian: null dictionary");
  const int d = dict->dim();
  const int k = dict->size();
  require(mean.size() == d, "project_gaussian: mean has wrong dimension");
  require(cov.rows() == d && cov.cols() == d, "project_gaussian: covariance shape mismatch");
  require(cov.isApprox(cov.transpose(), 1e-12), "project_gaussian: covariance not symmetric");
  const Eigen::LLT<Matrix> cov_llt(cov);
  require(cov_llt.info() == Eigen::Success, "project_gaussian: covariance not positive definite");

  GridSpec grid = options.grid.lower.size() == 0 ? default_quadrature_grid(*dict) : options.grid;
  grid.validate();
  require(grid.dim() == d, "project_gaussian: quadrature grid has wrong dimension");
  for (int a = 0; a < d; ++a) {
    const double reach = 4.0 * std::sqrt(cov(a, a));
    if (mean[a] - reach < grid.lower[a] || mean[a] + reach > grid.upper[a]) {
      throw InvalidArgument("project_gaussian: quadrature grid does not cover mean +/- 4 sigma on axis " +
                            std::to_string(a));
    }
  }

  const Matrix pts = grid_points(grid);
  const Matrix psi = dict->evaluate_columns(pts);  // k x m
  Vector target(pts.cols());
  for (Eigen::Index j = 0; j < pts.cols(); ++j) target[j] = gaussian_pdf(pts.col(j), mean, cov);

  Matrix normal = Matrix::Zero(k, k);
  normal.selfadjointView<Eigen::Lower>().rankUpdate(psi);
  normal.triangularView<Eigen::StrictlyUpper>() = normal.transpose();
  const Vector rhs = psi * target;
  const double lambda = options.regularization * normal.trace() / k;
  normal.diagonal().array() += lambda;

  Vector coeffs;
  bool used_pinv = false;
  const Eigen::LLT<Matrix> llt(normal);
  if (llt.info() == Eigen::Success && llt.rcond() > options.min_rcond) {
    coeffs = llt.solve(rhs);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(normal);
    cod.setThreshold(options.pinv_cutoff);
    coeffs = cod.solve(rhs);
    used_pinv = true;
  }

  const Vector recon = psi.transpose() * coeffs;
  ProjectionResult result{DensityCoefficients(dict, coeffs)};
  result.max_abs_error = (recon - target).cwiseAbs().maxCoeff();
  result.peak_density = target.maxCoeff();
  result.most_negative = std::min(0.0, recon.minCoeff());
  result.mass = mass_vector(*dict).dot(coeffs);
  result.used_pseudoinverse = used_pinv;
  return result;
}

}  // namespace pft
