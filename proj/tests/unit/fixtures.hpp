#pragma once

#include <memory>
#include <random>

#include "oracles.hpp"
#include "pftransport/edmd.hpp"

namespace pft::testing {

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

/// The reference Duffing setting: 30x30 RBFs on [-2.5, 2.5]^2 at unit grid
/// spacing width, 50x50 data grid, dt = 0.005. Built once per process.
inline std::shared_ptr<const GeneratorModel> duffing_model() {
  static const std::shared_ptr<const GeneratorModel> model = [] {
    const auto dict = std::make_shared<const Dictionary>(
        build_rbf_grid(vec({-2.5, -2.5}), vec({2.5, 2.5}), 30, 5.0 / 29.0));
    return std::make_shared<const GeneratorModel>(
        build_generator_model(make_duffing_system(), dict, box_grid(2, -2.5, 2.5, 50), 0.005));
  }();
  return model;
}

}  // namespace pft::testing
