#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedcl {

// Row-major feature matrix with integer labels in [0, num_classes).
struct Dataset {
  std::vector<double> features;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }

  // Copy of the given rows, in order.
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_histogram() const;
  void validate() const;
};

}  // namespace fedcl
