#ifndef NETFDI_RNG_HPP
#define NETFDI_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "netfdi/common.hpp"

namespace netfdi {

// Seeded generator with a hand-rolled Box-Muller transform so that streams are
// reproducible across standard library implementations (std::normal_distribution
// is not portable).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return std::ldexp(static_cast<double>(engine_() >> 11), -53);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    std::uint64_t integer(std::uint64_t bound) { return engine_() % bound; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Vec gaussian_vec(std::size_t n) {
        Vec v(n);
        for (auto& x : v) x = gaussian();
        return v;
    }

    // Derive an independent child stream, for per-subsystem seeding.
    Rng fork(std::uint64_t salt) {
        return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
    }

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace netfdi

#endif
