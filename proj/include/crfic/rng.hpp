#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace crfic {

// One RNG stream, identified by (master seed, stream id). Distinct stream ids
// give statistically independent streams, so replicas can be assigned fixed
// ids and produce the same numbers no matter how many workers run them.
//
// The normal sampler is written out explicitly (Marsaglia polar) instead of
// using std::normal_distribution, whose output sequence is
// implementation-defined; frozen test values must not depend on the standard
// library's private choices.
class NormalStream {
public:
    NormalStream(std::uint64_t master, std::uint64_t stream) {
        std::seed_seq seq{
            static_cast<std::uint32_t>(master & 0xffffffffu),
            static_cast<std::uint32_t>(master >> 32),
            static_cast<std::uint32_t>(stream & 0xffffffffu),
            static_cast<std::uint32_t>(stream >> 32)};
        gen_.seed(seq);
    }

    std::uint64_t raw() { return gen_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform on (lo, hi) used by the polar method; never returns the ends.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        for (;;) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            const double s = u * u + v * v;
            if (s >= 1.0 || s == 0.0) continue;
            const double f = std::sqrt(-2.0 * std::log(s) / s);
            spare_ = v * f;
            have_spare_ = true;
            return u * f;
        }
    }

    // Exponential with the given mean (inverse CDF; argument stays < 1).
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace crfic
