#pragma once

// Dataset supply: synthetic Gaussian blobs, MNIST IDX files, and
// class-wise Dirichlet partitioning across clients.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedcl/dataset.hpp"

namespace fedcl {

struct Partition {
  std::vector<std::vector<std::size_t>> clients;

  std::size_t num_clients() const noexcept { return clients.size(); }
  // Disjoint, covering [0, n), no empty client.
  void validate(std::size_t n) const;
  // FNV-1a over the client index lists; stable across runs and platforms.
  std::uint64_t hash() const;
};

// For each class, proportions ~ Dir(alpha * 1_K) split the (shuffled) class
// samples across clients at floor(cumsum(p) * n_c). Empty clients are
// repaired by moving one sample from the currently largest client.
Partition dirichlet_partition(const Dataset& data, std::size_t num_clients,
                              double alpha, std::uint64_t seed);

// Class centers on a seeded sphere of radius 5; samples N(center, spread^2 I).
// Rows are grouped by class, per_class each.
Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                   double spread, std::uint64_t seed);

// Same centers as make_blobs(classes, *, dim, *, seed), independent noise
// stream: a held-out split of the same task.
Dataset make_blobs_split(std::size_t classes, std::size_t per_class, std::size_t dim,
                         double spread, std::uint64_t seed, std::uint64_t split_seed);

// Per-client label-distribution entropy (nats), averaged over clients.
double mean_label_entropy(const Dataset& data, const Partition& part);

// Seeded subset keeping `fraction` of each class (at least one row per
// non-empty class).
std::vector<std::size_t> stratified_fraction(const Dataset& data, double fraction,
                                             std::uint64_t seed);

// ---- IDX ----

class IdxError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Big-endian IDX: images magic 0x00000803 (count, rows, cols, u8 pixels),
// labels magic 0x00000801 (count, u8 labels). Pixels scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 10);

// Raw pixel bytes of an IDX image file, in file order.
std::vector<std::uint8_t> read_idx_image_bytes(const std::filesystem::path& images);

// First n rows (or all if fewer).
Dataset take_rows(const Dataset& data, std::size_t n);

// ---- headered binary fixture ----
// "FCLDATA1" | u64 n | u64 dim | u64 classes | f64[n*dim] | i32[n], little endian.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace fedcl
