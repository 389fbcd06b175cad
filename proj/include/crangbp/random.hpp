#pragma once

// Seed derivation. Every random stream in a run is keyed by a 64-bit seed
// derived from the master seed and a list of tags, so streams never depend
// on evaluation order.

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace crangbp {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t));
    return h;
}

/// Tag for a sweep-point value; keyed on the bit pattern so that adding
/// new sweep values never shifts the seeds of existing ones.
inline std::uint64_t value_tag(double v) {
    return std::bit_cast<std::uint64_t>(v);
}

/// Stream identifiers used with derive_seed.
enum class Stream : std::uint64_t {
    Config = 1,
    TrueState,
    MeasurementNoise,
    UePlacement,
    RrhPlacement,
    Fading,
    ReceiverNoise,
};

inline std::uint64_t tag(Stream s) {
    return static_cast<std::uint64_t>(s);
}

}  // namespace crangbp
