#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace anisim {

// Seeded RNG wrapper. All stochastic choices in the library flow through this
// type so that a run is a pure function of its seeds.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    // Derive an independent stream; keeps unrelated sampling stages decoupled
    // so adding draws in one stage does not shift another.
    Rng fork(std::uint64_t salt) const {
        std::uint64_t s = seed_;
        s ^= salt + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
        return Rng(s);
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Marsaglia polar method; explicit so the stream is implementation-independent.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    std::int64_t index(std::int64_t n) {  // uniform in [0, n)
        return static_cast<std::int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    std::vector<double> normal_vec(std::size_t n) {
        std::vector<double> out(n);
        for (auto& x : out) x = normal();
        return out;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace anisim
