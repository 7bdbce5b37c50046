#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace casediag {

// All randomness in a run flows from one master seed through named
// sub-streams (data, init, train, augment, ...), so that changing the
// consumption pattern of one stream cannot perturb the others.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Derives a deterministic seed for the named sub-stream of `master`.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stream name
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return detail::splitmix64(master ^ detail::splitmix64(h));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view stream) {
  return std::mt19937_64(substream_seed(master, stream));
}

}  // namespace casediag
