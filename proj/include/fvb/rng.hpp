#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fvb {

// Deterministic stream splitting: every job derives its own engine from the
// master seed and a list of integer words (replication index, bootstrap index,
// grid column, ...), so results do not depend on scheduling order or worker
// count. splitmix64 is the mixing function.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> words) {
    std::uint64_t s = master;
    std::uint64_t out = splitmix64(s);
    for (std::uint64_t w : words) {
        s ^= w + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        out = splitmix64(s);
    }
    return out;
}

// Thin wrapper around mt19937_64 with hand-rolled variate generation.  The
// standard distribution objects are implementation defined, so sampling through
// them would not reproduce across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    Rng(std::uint64_t master, std::initializer_list<std::uint64_t> words)
        : engine_(derive_seed(master, words)) {}

    std::uint64_t raw() { return engine_(); }

    // uniform on [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller with the spare kept across calls
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    // unbiased integer in [0, n) by rejection
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = engine_(); } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // sample from an unnormalized discrete weight vector
    std::size_t categorical(const std::vector<double>& w) {
        double total = 0.0;
        for (double x : w) total += x;
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            acc += w[i];
            if (u < acc) return i;
        }
        return w.size() - 1;
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fvb
