#include "mvc/rng.hpp"

#include <cmath>
#include <numbers>

namespace mvc {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) throw ValueError("uniform_int: empty range");
    const auto span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(engine_() % span);
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Rng::normal_tensor(Shape shape, double stddev) {
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (double& x : v) x = stddev * normal();
    return Tensor(std::move(shape), std::move(v));
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (double& x : v) x = uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

// splitmix64 finaliser over (seed, stream).
uint64_t Rng::derive_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace mvc
