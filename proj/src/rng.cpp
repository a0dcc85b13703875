#include "dalc/rng.hpp"

#include <cmath>
#include <numbers>

namespace dalc {

double Rng::gaussian() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::bounded(std::uint64_t n) {
    if (n == 0) return 0;
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
}

void Rng::unit_vector(std::span<double> out) {
    double norm_sq = 0.0;
    for (double& v : out) {
        v = gaussian();
        norm_sq += v * v;
    }
    if (norm_sq <= 0.0) {
        if (!out.empty()) out[0] = 1.0;
        return;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : out) v *= inv;
}

}  // namespace dalc
