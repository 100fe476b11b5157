#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace smahyper {

// Seeded generator with hand-written distributions. std::mt19937_64's output
// sequence is fixed by the standard while the <random> distributions are not,
// so everything that must be reproducible across toolchains goes through here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    double normal();
    // Knuth multiplication method; intended for the small rates used by the
    // synthetic fixtures.
    int poisson(double rate);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a stream id.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace smahyper
