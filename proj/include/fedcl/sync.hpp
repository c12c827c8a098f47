#pragma once

// Global difficulty distribution and the multi-phase freeze/unfreeze state
// machine.
//
// The server samples each client's GMM, sorts the pooled draws, and reads
// phase thresholds off the sorted list. A live client is frozen once more
// than a fraction v of its own redrawn samples fall at or below the current
// threshold; when every client is frozen the schedule advances and everyone
// is unfrozen.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedcl/gmm.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

struct GlobalPool {
  std::vector<double> sorted_samples;
  std::vector<std::size_t> per_client_counts;

  std::size_t size() const noexcept { return sorted_samples.size(); }
  bool empty() const noexcept { return sorted_samples.empty(); }
  double min() const { return sorted_samples.front(); }
  double max() const { return sorted_samples.back(); }
  void validate() const;
};

// Draws per_client_count samples from every GMM (client k uses the stream
// derive_seed(seed, "pool", 0, k)), concatenates and sorts.
GlobalPool build_global_pool(std::span<const GmmParams> gmms,
                             std::size_t per_client_count, std::uint64_t seed);

// The ceil(T * N)-th smallest pooled sample (1-indexed, clamped to [1, N]).
double threshold_lookup(const GlobalPool& pool, double level);

// Uniform draw of an index into the sorted pool.
double draw_global_sample(const GlobalPool& pool, Rng& rng);

// True iff |{x in samples : x <= threshold}| > v * |samples|.
bool freeze_decision(std::span<const double> client_samples, double threshold,
                     double v);

enum class ScheduleOrder {
  Listed,      // traverse levels as configured
  Decreasing,  // traverse levels sorted high to low
};

// Levels in traversal order.
std::vector<double> ordered_schedule(std::vector<double> levels, ScheduleOrder order);

class SyncState {
 public:
  SyncState(std::vector<double> schedule, std::size_t num_clients,
            double temperature_v);

  const std::vector<double>& schedule() const noexcept { return schedule_; }
  std::size_t state_index() const noexcept { return z_; }
  bool completed() const noexcept { return z_ >= schedule_.size(); }
  double current_level() const;
  double temperature() const noexcept { return v_; }
  std::size_t num_clients() const noexcept { return frozen_.size(); }

  bool is_frozen(std::size_t k) const { return frozen_.at(k); }
  std::vector<std::size_t> frozen() const;
  std::vector<std::size_t> live() const;
  std::size_t frozen_count() const noexcept;
  bool all_frozen() const noexcept { return frozen_count() == frozen_.size(); }

  std::optional<double> threshold() const noexcept { return threshold_; }
  // Recomputes the current threshold from a freshly built pool.
  double refresh_threshold(const GlobalPool& pool);

  // Moves k from the live set to the frozen set. Freezing is one-way within
  // a training state.
  void freeze(std::size_t k);

  // Requires every client frozen. Increments the state index, unfreezes all
  // clients and recomputes the threshold from pool when another state
  // remains. Returns false when the schedule is exhausted.
  bool advance(const GlobalPool* pool);
  // Same transition without the all-frozen precondition; used when a
  // round cap ends a state early.
  bool force_advance(const GlobalPool* pool);

 private:
  std::vector<double> schedule_;
  std::size_t z_ = 0;
  std::vector<bool> frozen_;
  double v_;
  std::optional<double> threshold_;
};

}  // namespace fedcl
