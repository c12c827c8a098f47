#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fedcl/dataset.hpp"

namespace fedcl::testing {

// Central differences, h = 1e-5.
inline std::vector<double> numeric_gradient(std::span<double> x,
                                            const std::function<double()>& f,
                                            double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// ||a - b|| / max(||a|| + ||b||, tiny)
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

inline Dataset random_dataset(std::size_t n, std::size_t dim, std::size_t classes,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0, 1);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  Dataset d;
  d.dim = dim;
  d.num_classes = classes;
  for (std::size_t i = 0; i < n * dim; ++i) d.features.push_back(nd(rng));
  for (std::size_t i = 0; i < n; ++i) d.labels.push_back(lab(rng));
  return d;
}

}  // namespace fedcl::testing
