#pragma once

// One-dimensional Gaussian mixtures over difficulty scores: EM fitting,
// density evaluation and sampling.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedcl {

inline constexpr double kVarianceFloor = 1e-6;

struct GmmComponent {
  double weight = 1.0;
  double mean = 0.0;
  double variance = 1.0;

  friend bool operator==(const GmmComponent&, const GmmComponent&) = default;
};

struct GmmParams {
  std::vector<GmmComponent> components;

  std::size_t size() const noexcept { return components.size(); }
  // Weights sum to one, variances at or above the floor, L >= 1.
  void validate() const;

  friend bool operator==(const GmmParams&, const GmmParams&) = default;
};

struct EmOptions {
  std::size_t components = 3;
  std::size_t max_iters = 200;
  double tol = 1e-7;

  friend bool operator==(const EmOptions&, const EmOptions&) = default;
};

struct EmResult {
  GmmParams gmm;
  double log_likelihood = 0.0;
  // Total log-likelihood after initialization and after every EM iteration.
  std::vector<double> trace;
  std::size_t iterations = 0;
  // Set when fewer scores than requested components were supplied.
  bool components_reduced = false;
  // Set when every score was identical.
  bool degenerate = false;
};

EmResult fit_em(std::span<const double> scores, const EmOptions& opts,
                std::uint64_t seed);

double pdf(const GmmParams& gmm, double x);
double log_likelihood(const GmmParams& gmm, std::span<const double> xs);

std::vector<double> sample(const GmmParams& gmm, std::size_t count,
                           std::uint64_t seed);

}  // namespace fedcl
