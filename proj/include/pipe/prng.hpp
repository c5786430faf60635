#pragma once

#include <cstdint>

namespace pipeh {

// Counter-based deterministic random stream.
//
// value(seed, i) is the i-th output of a SplitMix64 sequence started at
// `seed`. The mapping is pure: any (seed, counter) pair yields the same
// 64-bit word on every platform, so test oracles can replay a policy's
// coin stream without sharing code with the policy.
inline uint64_t rng_value(uint64_t seed, uint64_t counter) {
    uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Uniform double in [0, 1) from the top 53 bits of rng_value.
inline double rng_uniform(uint64_t seed, uint64_t counter) {
    return static_cast<double>(rng_value(seed, counter) >> 11) * 0x1.0p-53;
}

// Stateful view over the stream: each call consumes one counter slot.
class RngStream {
public:
    explicit RngStream(uint64_t seed) : seed_(seed) {}

    uint64_t next_u64() { return rng_value(seed_, counter_++); }
    double next_uniform() { return rng_uniform(seed_, counter_++); }
    bool next_bernoulli(double p) { return next_uniform() < p; }

    // next_below(n) draws from [0, n) by scaling; n must be > 0.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(next_uniform() * static_cast<double>(n));
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

// Derives a child seed (per task, per episode) from a run seed and an index.
inline uint64_t derive_seed(uint64_t run_seed, uint64_t index) {
    return rng_value(run_seed ^ 0xA5A5A5A55A5A5A5Aull, index);
}

} // namespace pipeh
