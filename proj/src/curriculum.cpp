#include "fedcl/curriculum.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fedcl/errors.hpp"

namespace fedcl {

namespace {

constexpr double kInvE = 1.0 / std::numbers::e;
constexpr double kBranchGuard = 1e-12;

}  // namespace

void CurriculumConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("curriculum lambda must be positive", "curriculum.lambda");
  if (!std::isfinite(tau)) throw ConfigError("curriculum tau must be finite", "curriculum.tau");
}

double lambert_w0(double x) {
  if (x == 0.0) return 0.0;
  // At and below the branch point the principal branch is pinned to -1,
  // which puts the confidence on the edge of its domain (sigma = e).
  if (x <= -kInvE) return -1.0;
  if (x < -kInvE + kBranchGuard) x = -kInvE + kBranchGuard;

  double w;
  if (x < -0.25) {
    // Branch-point expansion.
    const double p = std::sqrt(2.0 * (std::numbers::e * x + 1.0));
    w = -1.0 + p - p * p / 3.0;
  } else if (x < 3.0) {
    w = std::log1p(x);
    w = w * (1.0 - std::log1p(w) / (2.0 + w));
  } else {
    const double l1 = std::log(x);
    w = l1 - std::log(l1);
  }

  for (int it = 0; it < 64; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double wp1 = w + 1.0;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double delta = f / denom;
    w -= delta;
    if (std::abs(delta) < 1e-12 * (1.0 + std::abs(w))) break;
  }
  return w;
}

double optimal_confidence(double base_loss, const CurriculumConfig& cfg) {
  if (!cfg.enabled) return 1.0;
  const double y = (base_loss - cfg.tau) / (2.0 * cfg.lambda);
  return std::exp(-lambert_w0(y));
}

double difficulty_score(double base_loss, double confidence,
                        const CurriculumConfig& cfg) {
  if (!cfg.enabled) return base_loss;
  return (base_loss - cfg.tau) * confidence;
}

SampleDifficulty cl_loss(double base_loss, const CurriculumConfig& cfg) {
  SampleDifficulty s;
  s.base_loss = base_loss;
  if (!cfg.enabled) {
    s.confidence = 1.0;
    s.difficulty_score = base_loss;
    s.cl_loss = base_loss;
    return s;
  }
  s.confidence = optimal_confidence(base_loss, cfg);
  s.difficulty_score = difficulty_score(base_loss, s.confidence, cfg);
  const double ls = std::log(s.confidence);
  s.cl_loss = s.difficulty_score + cfg.lambda * ls * ls;
  return s;
}

CurriculumRisk empirical_cl_risk(const ModelParams& params, const Dataset& data,
                                 const CurriculumConfig& cfg) {
  if (data.empty()) throw DataError("empirical risk over an empty dataset");
  CurriculumRisk out;
  out.scores.resize(data.size());
  std::vector<double> probs;
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto fwd = forward_classifier(params, data.row(i));
    const double ce = softmax_xent(fwd.logits, data.labels[i], probs);
    const auto s = cl_loss(ce, cfg);
    out.scores[i] = s.difficulty_score;
    sum += s.cl_loss;
  }
  out.risk = sum / static_cast<double>(data.size());
  return out;
}

}  // namespace fedcl
