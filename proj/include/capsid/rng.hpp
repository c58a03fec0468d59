#pragma once

#include <cmath>
#include <cstdint>

namespace capsid {

/// Deterministic PRNG used for every random choice in the project.
///
/// xoshiro256++ with splitmix64 seeding. Distributions are hand-rolled on top
/// of the raw 64-bit stream so that a given integer seed reproduces the same
/// values on any platform, which std::<distribution> does not guarantee.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
    }

    /// Independent seeded substream, e.g. one per dataset sample.
    static Rng derive(uint64_t seed, uint64_t stream) {
        uint64_t x = seed;
        uint64_t a = splitmix64(x);
        return Rng(a ^ (stream + 0x9e3779b97f4a7c15ULL) * 0xbf58476d1ce4e5b9ULL);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform real in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo,hi], inclusive. Unbiased via rejection.
    int uniform_int(int lo, int hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return lo + static_cast<int>(r % span);
    }

    /// Gaussian via Marsaglia's polar method (only sqrt/log from libm).
    double normal(double mean = 0.0, double sigma = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + sigma * spare_;
        }
        double u, v, q;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            q = u * u + v * v;
        } while (q >= 1.0 || q == 0.0);
        const double f = std::sqrt(-2.0 * std::log(q) / q);
        spare_ = v * f;
        have_spare_ = true;
        return mean + sigma * u * f;
    }

    /// Fisher-Yates shuffle of an indexable container.
    template <typename Seq>
    void shuffle(Seq& seq) {
        for (int i = static_cast<int>(seq.size()) - 1; i > 0; --i) {
            const int j = uniform_int(0, i);
            std::swap(seq[i], seq[j]);
        }
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace capsid
