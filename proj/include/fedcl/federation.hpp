#pragma once

// Round-based orchestration of FedCL and the FedAvg / FedProx baselines.
//
// Per round the server broadcasts (global model, generator, label prior,
// sorted difficulty pool, sync metadata) to an active subset of live
// clients. Each selected client trains locally and reports its parameters,
// a GMM over its difficulty scores and its label counter. The server then
// averages one parameter vector per client (fresh for reporters, cached for
// frozen clients, the broadcast model for unselected live clients), refreshes
// the label prior and the generator, rebuilds the pool, and freezes live
// clients that have reached the current difficulty level.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedcl/config.hpp"
#include "fedcl/data.hpp"
#include "fedcl/generator.hpp"
#include "fedcl/gmm.hpp"
#include "fedcl/nn.hpp"
#include "fedcl/sync.hpp"

namespace fedcl {

struct ClientReport {
  std::size_t client_id = 0;
  ModelParams model;
  GmmParams gmm;  // empty for the baselines
  std::vector<std::uint64_t> label_counter;
  std::size_t local_steps_run = 0;
  double mean_local_loss = 0.0;

  friend bool operator==(const ClientReport&, const ClientReport&) = default;
};

struct Broadcast {
  ModelParams model;
  std::optional<GeneratorParams> generator;
  LabelPrior prior;
  std::optional<GlobalPool> pool;
  std::size_t state_index = 0;
  std::optional<double> threshold;
};

// Identifies the random stream of one client update.
struct ClientContext {
  std::uint64_t master_seed = 0;
  std::size_t round = 0;
  std::size_t client_id = 0;
};

ClientReport client_local_update(const Broadcast& broadcast, const Dataset& local,
                                 const RunConfig& cfg, const ClientContext& ctx);

// Coordinate-wise mean of the given parameter vectors, summed in order.
ModelParams average_models(std::span<const ModelParams* const> models);

// Mean over live reports and cached frozen models; requires
// live.size() + frozen.size() == num_clients.
ModelParams aggregate(std::span<const ClientReport> live,
                      std::span<const ModelParams> frozen, std::size_t num_clients);

// Top-1 accuracy of argmax(logits), ties to the lowest class index.
double evaluate(const ModelParams& model, const Dataset& test);

struct MetricsRow {
  std::size_t round = 0;
  std::size_t state_index = 0;
  std::string algorithm;
  double test_accuracy = 0.0;
  double mean_client_loss = 0.0;
  double generator_loss = 0.0;
  std::size_t frozen_count = 0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct SyncEvent {
  std::size_t round = 0;
  std::size_t state_index = 0;
  std::size_t frozen_count = 0;
  double threshold = 0.0;
  std::string kind;  // "freeze", "advance", "forced_advance", "complete"

  friend bool operator==(const SyncEvent&, const SyncEvent&) = default;
};

// Client splits and the held-out test set of one experiment.
struct ExperimentData {
  Dataset train;  // the portion distributed to clients
  Dataset test;
  Partition partition;
  std::vector<Dataset> clients;
};

ExperimentData build_experiment_data(const RunConfig& cfg);

// Initial global model for cfg (seeded from the master seed).
ModelParams initial_model(const RunConfig& cfg, std::size_t input_dim, std::size_t classes);

// FNV-1a over the raw parameter bytes.
std::uint64_t model_hash(const ModelParams& m);

class Server {
 public:
  Server(const RunConfig& cfg, const ExperimentData& data);

  bool finished() const noexcept { return finished_; }
  std::size_t round() const noexcept { return round_; }
  const ModelParams& global_model() const noexcept { return global_; }
  const SyncState& sync_state() const noexcept { return sync_; }
  const std::optional<GeneratorParams>& generator() const noexcept { return generator_; }
  const LabelPrior& prior() const noexcept { return prior_; }
  const std::optional<GlobalPool>& pool() const noexcept { return pool_; }
  const std::vector<SyncEvent>& events() const noexcept { return events_; }
  const std::vector<std::size_t>& last_active() const noexcept { return last_active_; }
  std::size_t monotonicity_checks() const noexcept { return monotonicity_checks_; }

  Broadcast make_broadcast() const;

  // One communication round; requires !finished().
  MetricsRow run_round();

 private:
  bool is_fedcl() const noexcept { return cfg_.algorithm == Algorithm::FedCL; }
  std::vector<std::size_t> select_active();
  std::vector<ClientReport> run_clients(const Broadcast& b,
                                        const std::vector<std::size_t>& active) const;
  double refresh_generator();
  void update_sync(std::size_t round_no);

  RunConfig cfg_;
  const ExperimentData* data_;
  ModelParams global_;
  std::optional<GeneratorParams> generator_;
  OptimizerState gen_opt_;
  LabelPrior prior_;
  std::optional<GlobalPool> pool_;
  SyncState sync_;
  std::vector<std::optional<ModelParams>> cached_models_;
  std::vector<std::optional<GmmParams>> cached_gmms_;
  std::vector<std::vector<std::uint64_t>> cached_counters_;
  std::vector<std::size_t> last_active_;
  std::vector<SyncEvent> events_;
  std::size_t round_ = 0;
  std::size_t rounds_in_state_ = 0;
  std::size_t monotonicity_checks_ = 0;
  bool finished_ = false;
};

struct RunResult {
  ModelParams final_model;
  std::vector<MetricsRow> history;
  std::vector<SyncEvent> events;
  std::uint64_t partition_hash = 0;
  std::uint64_t init_hash = 0;
  std::size_t monotonicity_checks = 0;
};

RunResult run_training(const RunConfig& cfg, const ExperimentData& data);
RunResult run_training(const RunConfig& cfg);

// Worker cap for parallel client updates: FEDCL_THREADS, else hardware
// concurrency, at least 1.
std::size_t worker_threads();

}  // namespace fedcl
