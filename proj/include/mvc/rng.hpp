#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mvc/tensor.hpp"

namespace mvc {

// All randomness in the project flows through this class. The engine is
// std::mt19937_64 (a fully specified algorithm); uniform and normal variates
// are derived here rather than through <random> distributions, whose output
// is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

    uint64_t next_u64() { return engine_(); }
    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer on [lo, hi].
    int64_t uniform_int(int64_t lo, int64_t hi);
    // Standard normal via Box-Muller, one variate per call.
    double normal();

    Tensor normal_tensor(Shape shape, double stddev = 1.0);
    Tensor uniform_tensor(Shape shape, double lo, double hi);

    // Independent generator for a named sub-stream.
    // Depends only on the construction seed, not on how many draws were made.
    Rng fork(uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }
    static uint64_t derive_seed(uint64_t seed, uint64_t stream);

private:
    std::mt19937_64 engine_;
    uint64_t seed_;
};

}  // namespace mvc
