#pragma once

#include "pftransport/common.hpp"

namespace pft {

/// Uniform tensor grid over an axis-aligned box, both endpoints included.
struct GridSpec {
  Vector lower;
  Vector upper;
  int n_per_dim = 2;

  int dim() const { return static_cast<int>(lower.size()); }
  long point_count() const;
  double spacing(int axis) const;

  /// Throws InvalidArgument unless lower < upper componentwise and n_per_dim >= 2.
  void validate() const;
};

/// Grid points as columns of a d x n^d matrix. Ordering is row-major by
/// dimension: the last coordinate varies fastest.
Matrix grid_points(const GridSpec& grid);

/// Square grid helper: the same [lo, hi] interval on every axis.
GridSpec box_grid(int dim, double lo, double hi, int n_per_dim);

}  // namespace pft
