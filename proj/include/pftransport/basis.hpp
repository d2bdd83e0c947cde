#pragma once

#include <memory>

#include <json.hpp>

#include "pftransport/common.hpp"
#include "pftransport/grid.hpp"

namespace pft {

/// Gaussian RBF dictionary psi_i(x) = exp(-|x - c_i|^2 / width^2) with a
/// shared width. Immutable after construction.
class Dictionary {
 public:
  Dictionary(Matrix centers, double width);

  int size() const { return static_cast<int>(centers_.rows()); }
  int dim() const { return static_cast<int>(centers_.cols()); }
  const Matrix& centers() const { return centers_; }
  double width() const { return width_; }

  /// Integral of a single basis element over R^d: (pi width^2)^(d/2).
  double element_mass() const;

  /// Psi(x), a k-vector.
  Vector evaluate(const Vector& x) const;

  /// Psi evaluated on the columns of `points` (d x m): a k x m matrix.
  Matrix evaluate_columns(const Matrix& points) const;

  nlohmann::json to_json() const;
  static Dictionary from_json(const nlohmann::json& j);

  friend bool operator==(const Dictionary& a, const Dictionary& b) {
    return a.width_ == b.width_ && a.centers_ == b.centers_;
  }

 private:
  Matrix centers_;  // k x d
  double width_;
};

/// Centers on a uniform tensor grid (both endpoints included, last
/// coordinate varying fastest).
Dictionary build_rbf_grid(const Vector& lower, const Vector& upper, int n_per_dim, double width);

/// Output matrix C mapping coefficients to raw moments:
/// rows 0..d-1 hold the first moments, the remaining d(d+1)/2 rows hold
/// the second moments in upper-triangle row-major order (11, 12, ..., dd).
/// Integrals are taken over R^d in closed form.
Matrix moment_matrix(const Dictionary& dict);

/// w_j = integral of psi_j; w^T rho_hat is the total mass.
Vector mass_vector(const Dictionary& dict);

/// Raw-moment output vector for a density with the given mean and covariance.
Vector moments_from_mean_cov(const Vector& mean, const Matrix& cov);

/// Recover (mean, covariance) from a raw-moment output vector.
void mean_cov_from_moments(const Vector& y, int dim, Vector& mean, Matrix& cov);

/// Coefficient vector of a density projected onto span(dictionary).
struct DensityCoefficients {
  std::shared_ptr<const Dictionary> dictionary;
  Vector coeffs;

  DensityCoefficients(std::shared_ptr<const Dictionary> dict, Vector c);

  /// Psi(x)^T rho_hat. May be slightly negative.
  double density_at(const Vector& x) const;
};

struct ProjectionOptions {
  /// Quadrature grid for the least-squares fit; defaults to the dictionary's
  /// bounding box with 100 points per axis when left empty.
  GridSpec grid;
  /// Tikhonov weight, relative to trace(Psi Psi^T)/k.
  double regularization = 1e-8;
  /// Reciprocal condition number below which the normal equations are
  /// abandoned for a truncated pseudoinverse.
  double min_rcond = 1e-14;
  /// Relative singular value cutoff for the pseudoinverse fallback.
  double pinv_cutoff = 1e-12;
};

struct ProjectionResult {
  DensityCoefficients coefficients;
  double max_abs_error = 0.0;   // over the quadrature grid
  double peak_density = 0.0;    // max of the target on the grid
  double most_negative = 0.0;   // min of the reconstruction (<= 0 means excursion)
  double mass = 0.0;            // w^T rho_hat
  bool used_pseudoinverse = false;
};

/// Least-squares projection of N(mean, cov) onto the dictionary span.
/// Throws InvalidArgument if cov is not SPD or the quadrature grid does not
/// cover mean +/- 4 standard deviations on every axis.
ProjectionResult project_gaussian(std::shared_ptr<const Dictionary> dict, const Vector& mean,
                                  const Matrix& cov, ProjectionOptions options = {});

/// Default quadrature grid: the bounding box of the centers, 100 per axis.
GridSpec default_quadrature_grid(const Dictionary& dict, int n_per_dim = 100);

/// Gaussian density N(mean, cov) at x.
double gaussian_pdf(const Vector& x, const Vector& mean, const Matrix& cov);

}  // namespace pft
