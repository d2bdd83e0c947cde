#include "pftransport/grid.hpp"

#include <cmath>
#include <vector>

namespace pft {

void GridSpec::validate() const {
  require(lower.size() > 0, "grid: empty bounds");
  require(lower.size() == upper.size(), "grid: lower/upper dimension mismatch");
  require(lower.allFinite() && upper.allFinite(), "grid: non-finite bounds");
  require((upper.array() > lower.array()).all(), "grid: upper must exceed lower componentwise");
  require(n_per_dim >= 2, "grid: n_per_dim must be >= 2");
}

long GridSpec::point_count() const {
  long n = 1;
  for (int i = 0; i < dim(); ++i) n *= n_per_dim;
  return n;
}

double GridSpec::spacing(int axis) const {
  return (upper[axis] - lower[axis]) / static_cast<double>(n_per_dim - 1);
}

Matrix grid_points(const GridSpec& grid) {
  grid.validate();
  const int d = grid.dim();
  const long m = grid.point_count();
  Matrix pts(d, m);
  std::vector<int> idx(d, 0);
  for (long j = 0; j < m; ++j) {
    for (int a = 0; a < d; ++a) {
      // Pin the last node to the bound exactly instead of lower + (n-1)*h.
      pts(a, j) = idx[a] == grid.n_per_dim - 1 ? grid.upper[a]
                                               : grid.lower[a] + idx[a] * grid.spacing(a);
    }
    for (int a = d - 1; a >= 0; --a) {
      if (++idx[a] < grid.n_per_dim) break;
      idx[a] = 0;
    }
  }
  return pts;
}

GridSpec box_grid(int dim, double lo, double hi, int n_per_dim) {
  GridSpec g{Vector::Constant(dim, lo), Vector::Constant(dim, hi), n_per_dim};
  g.validate();
  return g;
}

}  // namespace pft
