#pragma once

// Versioned checkpoint format for client reports and server broadcasts.
// Layout (all integers little endian, reals IEEE-754 binary64):
//
//   "FEDCL1"  u8 kind ('R' report | 'B' broadcast)  u32 section_count
//   section := char[4] tag  u64 byte_length  payload[byte_length]
//
// Readers skip sections with unknown tags. See docs/FORMATS.md for the
// payload of each tag.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "fedcl/federation.hpp"

namespace fedcl {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_report(const ClientReport& report);
ClientReport decode_report(std::string_view bytes);

std::string encode_broadcast(const Broadcast& b);
Broadcast decode_broadcast(std::string_view bytes);

std::string encode_gmm(const GmmParams& gmm);
GmmParams decode_gmm(std::string_view payload);

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace fedcl
