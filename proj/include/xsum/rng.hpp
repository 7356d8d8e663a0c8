#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace xsum {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a root seed and a stream name,
/// e.g. derive_seed(root, "corpus") or derive_seed(root, "noise/7").
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
  return Rng(derive_seed(root, stream));
}

/// Uniform draw on the open interval (0, 1); never returns an endpoint.
double uniform_open(Rng& rng);

/// Standard normal via Box–Muller on uniform_open, so sequences depend only
/// on the engine and not on the standard library's distribution internals.
double standard_normal(Rng& rng);

/// Uniform integer in [0, bound).
std::size_t uniform_index(Rng& rng, std::size_t bound);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

}  // namespace xsum
