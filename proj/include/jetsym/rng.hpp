#pragma once

#include <cstdint>

namespace jetsym {

/// splitmix64; used to derive independent per-trial streams from a master seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Small deterministic generator with portable output (unlike the std
/// distributions, identical across standard libraries).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // decorrelate nearby seeds
        splitmix64(state_);
        splitmix64(state_);
    }
    static Rng for_trial(uint64_t master, uint64_t trial) {
        return Rng(master * 0x9e3779b97f4a7c15ull + trial + 1);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// integer in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
};

} // namespace jetsym
