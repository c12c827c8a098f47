#include "fedcl/sync.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

#include "fedcl/errors.hpp"

namespace fedcl {

void GlobalPool::validate() const {
  if (sorted_samples.empty()) throw ProtocolError("empty global pool");
  if (!std::is_sorted(sorted_samples.begin(), sorted_samples.end()))
    throw ProtocolError("global pool is not sorted");
  std::size_t total = 0;
  for (auto c : per_client_counts) total += c;
  if (total != sorted_samples.size()) throw ProtocolError("pool counts do not sum to N");
}

GlobalPool build_global_pool(std::span<const GmmParams> gmms,
                             std::size_t per_client_count, std::uint64_t seed) {
  if (gmms.empty()) throw ProtocolError("global pool needs at least one client GMM");
  if (per_client_count == 0) throw ProtocolError("per-client sample count must be positive");
  GlobalPool pool;
  pool.sorted_samples.reserve(gmms.size() * per_client_count);
  for (std::size_t k = 0; k < gmms.size(); ++k) {
    const auto draws = sample(gmms[k], per_client_count, derive_seed(seed, "pool", 0, k));
    pool.sorted_samples.insert(pool.sorted_samples.end(), draws.begin(), draws.end());
    pool.per_client_counts.push_back(per_client_count);
  }
  std::sort(pool.sorted_samples.begin(), pool.sorted_samples.end());
  return pool;
}

double threshold_lookup(const GlobalPool& pool, double level) {
  if (pool.empty()) throw ProtocolError("threshold lookup on an empty pool");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("threshold level must lie in (0,1)");
  const auto n = pool.size();
  // Snap products like 0.3 * 2000 = 600.0000000000001 before rounding up.
  const double pos = level * static_cast<double>(n);
  const double near = std::round(pos);
  auto rank = static_cast<std::size_t>(std::abs(pos - near) <= 1e-9 * std::max(1.0, pos)
                                           ? near
                                           : std::ceil(pos));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return pool.sorted_samples[rank - 1];
}

double draw_global_sample(const GlobalPool& pool, Rng& rng) {
  if (pool.empty()) throw ProtocolError("draw from an empty pool");
  std::uniform_int_distribution<std::size_t> idx(0, pool.size() - 1);
  return pool.sorted_samples[idx(rng)];
}

bool freeze_decision(std::span<const double> client_samples, double threshold,
                     double v) {
  if (client_samples.empty()) throw std::invalid_argument("freeze decision on zero samples");
  const auto below = std::count_if(client_samples.begin(), client_samples.end(),
                                   [&](double x) { return x <= threshold; });
  // v * N is snapped like the threshold rank so that an exact tie such as
  // v = 0.29, N = 100 is not broken by rounding.
  double bound = v * static_cast<double>(client_samples.size());
  if (const double near = std::round(bound); std::abs(bound - near) <= 1e-9 * std::max(1.0, bound))
    bound = near;
  return static_cast<double>(below) > bound;
}

std::vector<double> ordered_schedule(std::vector<double> levels, ScheduleOrder order) {
  if (order == ScheduleOrder::Decreasing)
    std::stable_sort(levels.begin(), levels.end(), std::greater<>());
  return levels;
}

// ---------------------------------------------------------------------------

SyncState::SyncState(std::vector<double> schedule, std::size_t num_clients,
                     double temperature_v)
    : schedule_(std::move(schedule)), frozen_(num_clients, false), v_(temperature_v) {
  if (schedule_.empty()) throw std::invalid_argument("schedule must have at least one level");
  for (double t : schedule_)
    if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("schedule levels must lie in (0,1)");
  if (num_clients == 0) throw std::invalid_argument("sync state needs at least one client");
  if (!(v_ > 0.0 && v_ < 1.0)) throw std::invalid_argument("temperature v must lie in (0,1)");
}

double SyncState::current_level() const {
  if (completed()) throw ProtocolError("schedule exhausted");
  return schedule_[z_];
}

std::vector<std::size_t> SyncState::frozen() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < frozen_.size(); ++k)
    if (frozen_[k]) out.push_back(k);
  return out;
}

std::vector<std::size_t> SyncState::live() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < frozen_.size(); ++k)
    if (!frozen_[k]) out.push_back(k);
  return out;
}

std::size_t SyncState::frozen_count() const noexcept {
  return static_cast<std::size_t>(std::count(frozen_.begin(), frozen_.end(), true));
}

double SyncState::refresh_threshold(const GlobalPool& pool) {
  threshold_ = threshold_lookup(pool, current_level());
  return *threshold_;
}

void SyncState::freeze(std::size_t k) {
  if (completed()) throw ProtocolError("freeze after schedule completion");
  frozen_.at(k) = true;
}

bool SyncState::advance(const GlobalPool* pool) {
  if (!all_frozen())
    throw ProtocolError("advance with " + std::to_string(frozen_.size() - frozen_count()) +
                        " live clients");
  return force_advance(pool);
}

bool SyncState::force_advance(const GlobalPool* pool) {
  if (completed()) throw ProtocolError("advance after schedule completion");
  ++z_;
  std::fill(frozen_.begin(), frozen_.end(), false);
  threshold_.reset();
  if (completed()) return false;
  if (pool != nullptr) refresh_threshold(*pool);
  return true;
}

}  // namespace fedcl
