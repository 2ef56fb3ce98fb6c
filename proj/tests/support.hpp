#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cpc/dataset.hpp"
#include "cpc/random.hpp"

namespace cpc::testing {

/// Gaussian blobs, one per class, centers spread along the axes.
inline LabeledDataset random_blobs(std::size_t n, int dim, int classes, double spread,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(n), dim);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    int c = static_cast<int>(i % static_cast<std::size_t>(classes));
    y[i] = c;
    for (int j = 0; j < dim; ++j) {
      double center = (j % classes == c) ? spread : 0.0;
      x(static_cast<Eigen::Index>(i), j) = center + noise(rng);
    }
  }
  return {std::move(x), std::move(y), classes};
}

/// Uniform points on a small integer grid so that distance ties are common.
inline Matrix lattice_points(std::size_t n, int dim, int span, Rng& rng) {
  std::uniform_int_distribution<int> cell(0, span);
  Matrix x(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = cell(rng);
  return x;
}

}  // namespace cpc::testing
