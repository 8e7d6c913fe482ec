#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tenreg {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent generator from a master seed and a path of stream
/// coordinates, e.g. {repeat, purpose, iteration}. The key is a pure function
/// of its inputs, so a stream can be recreated on any thread in any order.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// Stream purposes used across the library.
namespace stream {
inline constexpr std::uint64_t truth = 1;
inline constexpr std::uint64_t train = 2;
inline constexpr std::uint64_t test = 3;
inline constexpr std::uint64_t noise = 4;
inline constexpr std::uint64_t folds = 5;
}  // namespace stream

}  // namespace tenreg
