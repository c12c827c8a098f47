#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedcl {

// Dimension mismatch between a parameter container and its input.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or activation went non-finite. sample_index is the offending batch
// row, or npos when the failure is not attributable to one sample.
class NumericError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  NumericError(const std::string& what, std::size_t sample_index = npos)
      : std::runtime_error(what), sample_index_(sample_index) {}

  std::size_t sample_index() const noexcept { return sample_index_; }

 private:
  std::size_t sample_index_;
};

// Synchronization state machine driven out of order.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid run configuration. key and line are empty/0 when not applicable.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& what, std::string key = {}, int line = 0)
      : std::invalid_argument(what), key_(std::move(key)), line_(line) {}

  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  std::string key_;
  int line_;
};

// Dataset construction or partition failure.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedcl
