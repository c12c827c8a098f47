#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedcl {

using Rng = std::mt19937_64;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a over the tag bytes.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Stream seed for (purpose, round, client) under a master seed:
//   mix64(mix64(mix64(master ^ fnv1a(tag)) ^ round) ^ client)
// Every random stream in a run is derived this way so that workers never
// share generator state.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                    std::uint64_t round = 0,
                                    std::uint64_t client = 0) noexcept {
  return mix64(mix64(mix64(master ^ tag_hash(tag)) ^ round) ^ client);
}

inline Rng make_rng(std::uint64_t master, std::string_view tag,
                    std::uint64_t round = 0, std::uint64_t client = 0) {
  return Rng(derive_seed(master, tag, round, client));
}

}  // namespace fedcl
