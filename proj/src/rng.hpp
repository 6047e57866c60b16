#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace progtune {

// Deterministic RNG. All draws go through explicit, portable constructions so
// that identical seeds give bit-identical streams on any platform; none of the
// distribution adapters from <random> are used (their output is
// implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller.
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Normal(0, std) resampled until within +-bound_stds standard deviations.
    double truncated_normal(double std_dev, double bound_stds = 2.0) {
        for (;;) {
            double z = normal();
            if (std::fabs(z) <= bound_stds) return z * std_dev;
        }
    }

    // Uniform integer in [0, n) by rejection.
    int64_t below(int64_t n) {
        uint64_t un = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        for (;;) {
            uint64_t v = gen_();
            if (v < limit) return static_cast<int64_t>(v % un);
        }
    }

    // Fisher-Yates; std::shuffle is not pinned by the standard.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 finalizer, used to derive independent stream seeds.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace progtune
