#pragma once

#include <cstdint>
#include <random>

namespace centeratt {

// Deterministic RNG helpers. All sampling goes through these mappings rather
// than std distributions so that a seed produces the same stream on every
// standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return n ? engine_() % n : 0; }

private:
    std::mt19937_64 engine_;
};

// Stateless mix used to derive independent per-item seeds from a master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace centeratt
