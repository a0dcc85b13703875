#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace dalc {

// FNV-1a, used to fold strings into seeds.
constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// splitmix64 finalizer; decorrelates structured seed inputs.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

// Deterministic RNG with explicitly coded transforms. std::mt19937_64 is
// pinned by the standard; the distributions below are hand-rolled because
// the std ones are implementation-defined and would break reproducible logs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double gaussian();

    // Uniform in [0, n).
    std::uint64_t bounded(std::uint64_t n);

    // Fills `out` with an isotropic unit vector.
    void unit_vector(std::span<double> out);

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace dalc
