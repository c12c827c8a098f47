#pragma once

// Run configuration: built-in defaults, then a key=value file, then flag
// overrides. The text format is one `key = value` per line with dotted
// section names; `#` starts a comment; lists are comma separated.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedcl/curriculum.hpp"
#include "fedcl/gmm.hpp"
#include "fedcl/sync.hpp"

namespace fedcl {

enum class Algorithm { FedCL, FedAvg, FedProx };
enum class DatasetKind { Blobs, Mnist };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

struct RunConfig {
  Algorithm algorithm = Algorithm::FedCL;
  std::uint64_t seed = 1;
  std::size_t rounds = 200;

  // federation
  std::size_t num_clients = 20;
  double active_ratio = 0.5;
  std::size_t local_steps = 20;
  std::size_t batch_size = 32;
  double client_lr = 0.01;
  double prox_mu = 0.1;

  // model
  std::vector<std::size_t> feature_widths{64, 32};

  CurriculumConfig curriculum{};

  // generator / distillation
  bool generator_enabled = true;
  double generator_lr = 1e-4;
  std::size_t generator_batch = 128;
  std::size_t generator_steps = 10;
  std::size_t noise_dim = 32;
  std::size_t generator_hidden = 128;
  std::size_t distill_batch = 32;
  double distill_weight = 1.0;
  // Reserved; no diversity term is implemented and enabling it is rejected.
  bool diversity_loss = false;

  // sync
  bool sync_enabled = true;
  std::vector<double> schedule{0.3, 0.6, 0.9};
  ScheduleOrder schedule_order = ScheduleOrder::Listed;
  bool strict_order = false;
  double temperature_v = 0.8;
  std::size_t pool_samples_per_client = 200;
  std::size_t state_round_cap = 0;  // 0: only the global round budget applies

  EmOptions gmm{};

  // data
  DatasetKind dataset = DatasetKind::Blobs;
  double dirichlet_alpha = 0.1;
  double client_fraction = 0.5;
  std::size_t blob_classes = 10;
  std::size_t blob_per_class = 400;
  std::size_t blob_test_per_class = 100;
  std::size_t blob_dim = 8;
  double blob_spread = 2.0;
  std::string mnist_train_images;
  std::string mnist_train_labels;
  std::string mnist_test_images;
  std::string mnist_test_labels;
  std::size_t mnist_train_limit = 0;  // 0: all rows
  std::size_t mnist_test_limit = 0;

  // output
  bool record_wall_time = false;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Canonical key list, in serialization order.
const std::vector<std::string>& config_keys();

// Applies one key=value assignment. `line` is reported in errors.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value,
                      int line = 0);
std::string get_config_value(const RunConfig& cfg, std::string_view key);

// Applies every assignment in the text on top of cfg.
void apply_config_text(RunConfig& cfg, std::string_view text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Defaults <- file (if non-empty) <- overrides (in order), then validate.
RunConfig resolve_config(const std::filesystem::path& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

// Every key, canonical order, `key = value` per line.
std::string serialize_config(const RunConfig& cfg);

}  // namespace fedcl
