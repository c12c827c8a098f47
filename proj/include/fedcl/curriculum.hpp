#pragma once

// Confidence-aware curriculum loss.
//
// For a per-sample task loss l the weighted loss is
//   l_cl(sigma) = (l - tau) * sigma + lambda * (ln sigma)^2
// and the difficulty score is its first summand. The confidence is set to
// the minimizer of l_cl over (0, e], where the objective is strictly convex:
//   sigma* = exp(-W0(max(-1/e, (l - tau) / (2 lambda))))
// Below the clamp the objective is decreasing on the whole interval and
// sigma* = e.
//
// Note: "sigma" here is a per-sample confidence, unrelated to the GMM
// component variances in gmm.hpp.

#include <vector>

#include "fedcl/dataset.hpp"
#include "fedcl/nn.hpp"

namespace fedcl {

struct CurriculumConfig {
  double tau = 10.0;
  double lambda = 0.5;
  // When false the loss is the plain task loss (sigma = 1, no regularizer,
  // tau = 0).
  bool enabled = true;

  void validate() const;
  friend bool operator==(const CurriculumConfig&, const CurriculumConfig&) = default;
};

struct SampleDifficulty {
  double base_loss = 0.0;
  double confidence = 1.0;
  double difficulty_score = 0.0;
  double cl_loss = 0.0;
};

// Principal branch of the Lambert W function for x >= -1/e, by Halley
// iteration.
double lambert_w0(double x);

double optimal_confidence(double base_loss, const CurriculumConfig& cfg);
double difficulty_score(double base_loss, double confidence,
                        const CurriculumConfig& cfg);
SampleDifficulty cl_loss(double base_loss, const CurriculumConfig& cfg);

// d l_cl / d l at the optimal confidence. Equals sigma* (the confidence is
// stationary, so its own derivative does not contribute).
inline double cl_loss_slope(const SampleDifficulty& s) { return s.confidence; }

struct CurriculumRisk {
  double risk = 0.0;
  std::vector<double> scores;
};

// Mean curriculum loss over the dataset and per-sample difficulty scores.
CurriculumRisk empirical_cl_risk(const ModelParams& params, const Dataset& data,
                                 const CurriculumConfig& cfg);

}  // namespace fedcl
