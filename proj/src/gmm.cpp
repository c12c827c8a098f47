#include "fedcl/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <string>

#include "fedcl/errors.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal(double x, double mean, double var) {
  const double d = x - mean;
  return -kLogSqrt2Pi - 0.5 * std::log(var) - 0.5 * d * d / var;
}

double log_sum_exp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

void GmmParams::validate() const {
  if (components.empty()) throw std::invalid_argument("GMM needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0.0 && c.weight <= 1.0)) throw std::invalid_argument("GMM weight outside [0,1]");
    if (!(c.variance >= kVarianceFloor)) throw std::invalid_argument("GMM variance below floor");
    if (!std::isfinite(c.mean)) throw std::invalid_argument("GMM mean not finite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("GMM weights do not sum to one");
}

double pdf(const GmmParams& gmm, double x) {
  double p = 0.0;
  for (const auto& c : gmm.components) p += c.weight * std::exp(log_normal(x, c.mean, c.variance));
  return p;
}

double log_likelihood(const GmmParams& gmm, std::span<const double> xs) {
  std::vector<double> terms(gmm.size());
  double ll = 0.0;
  for (double x : xs) {
    for (std::size_t l = 0; l < gmm.size(); ++l) {
      const auto& c = gmm.components[l];
      terms[l] = (c.weight > 0.0 ? std::log(c.weight) : -INFINITY) +
                 log_normal(x, c.mean, c.variance);
    }
    ll += log_sum_exp(terms);
  }
  return ll;
}

EmResult fit_em(std::span<const double> scores, const EmOptions& opts,
                std::uint64_t seed) {
  if (scores.empty()) throw DataError("GMM fit on an empty score set");
  if (opts.components == 0) throw std::invalid_argument("GMM needs at least one component");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("non-finite difficulty score");

  EmResult res;
  const std::size_t n = scores.size();
  std::size_t L = opts.components;
  if (n < L) {
    std::clog << "fedcl: GMM fit on " << n << " scores, reducing components from "
              << L << " to " << n << '\n';
    L = n;
    res.components_reduced = true;
  }

  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) {
    res.degenerate = true;
    res.gmm.components = {{1.0, sorted.front(), kVarianceFloor}};
    res.log_likelihood = log_likelihood(res.gmm, scores);
    res.trace = {res.log_likelihood};
    return res;
  }

  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var = std::max(var / static_cast<double>(n), kVarianceFloor);

  // One seeded quantile per stratum [l/L, (l+1)/L) keeps initial means spread.
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto& comps = res.gmm.components;
  comps.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const double u = (static_cast<double>(l) + unit(rng)) / static_cast<double>(L);
    const auto idx = std::min(n - 1, static_cast<std::size_t>(u * static_cast<double>(n)));
    comps[l] = {1.0 / static_cast<double>(L), sorted[idx], var};
  }

  std::vector<double> resp(n * L);
  std::vector<double> terms(L);
  auto e_step = [&]() {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = 0; l < L; ++l) {
        const auto& c = comps[l];
        terms[l] = (c.weight > 0.0 ? std::log(c.weight) : -INFINITY) +
                   log_normal(scores[i], c.mean, c.variance);
      }
      const double lse = log_sum_exp(terms);
      ll += lse;
      for (std::size_t l = 0; l < L; ++l) resp[i * L + l] = std::exp(terms[l] - lse);
    }
    return ll;
  };

  double ll = e_step();
  res.trace.push_back(ll);
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    for (std::size_t l = 0; l < L; ++l) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * L + l];
        sx += resp[i * L + l] * scores[i];
      }
      auto& c = comps[l];
      c.weight = nk / static_cast<double>(n);
      if (nk < 1e-300) continue;
      c.mean = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = scores[i] - c.mean;
        sv += resp[i * L + l] * d * d;
      }
      c.variance = std::max(sv / nk, kVarianceFloor);
    }
    const double next = e_step();
    res.trace.push_back(next);
    ++res.iterations;
    const double gain = next - ll;
    ll = next;
    if (gain < opts.tol) break;
  }

  double total = 0.0;
  for (const auto& c : comps) total += c.weight;
  for (auto& c : comps) c.weight /= total;
  res.log_likelihood = ll;
  return res;
}

std::vector<double> sample(const GmmParams& gmm, std::size_t count,
                           std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(count);
  if (count == 0) return out;
  Rng rng(seed);
  std::vector<double> weights;
  for (const auto& c : gmm.components) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = gmm.components[pick(rng)];
    out.push_back(c.mean + std::sqrt(c.variance) * normal(rng));
  }
  return out;
}

}  // namespace fedcl
