#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lab {

// splitmix64 step; used to mix seeds and derive independent substreams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// A seeded random stream. Substreams are derived from (seed, id...)
// so that per-scenario / per-worker streams never share state.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    static RngStream derive(std::uint64_t seed, std::uint64_t id0,
                            std::uint64_t id1 = 0, std::uint64_t id2 = 0) {
        std::uint64_t s = seed;
        std::uint64_t h = splitmix64(s);
        s ^= id0 + 0x9e3779b97f4a7c15ULL;
        h ^= splitmix64(s);
        s ^= id1 + 0xc2b2ae3d27d4eb4fULL;
        h ^= splitmix64(s);
        s ^= id2 + 0x165667b19e3779f9ULL;
        h ^= splitmix64(s);
        return RngStream(h);
    }

    // uniform on (0, 1); never returns 0 or 1 exactly
    double uniform() {
        const std::uint64_t r = engine_();
        return (static_cast<double>(r >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; implemented here so output does not depend on the
    // standard library's distribution internals.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t next_u64() { return engine_(); }

    // Stateless uniform on (0,1) keyed by (seed, id0, id1, id2); cheap
    // enough for one-draw-per-event reduced-form samplers.
    static double counter_uniform(std::uint64_t seed, std::uint64_t id0, std::uint64_t id1 = 0,
                                  std::uint64_t id2 = 0) {
        std::uint64_t s = seed;
        std::uint64_t h = splitmix64(s);
        s ^= id0 + 0x9e3779b97f4a7c15ULL;
        h ^= splitmix64(s);
        s ^= id1 + 0xc2b2ae3d27d4eb4fULL;
        h ^= splitmix64(s);
        s ^= id2 + 0x165667b19e3779f9ULL;
        h ^= splitmix64(s);
        std::uint64_t z = h;
        return (static_cast<double>(splitmix64(z) >> 11) + 0.5) * 0x1.0p-53;
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace lab
