#pragma once

#include <cstdint>
#include <limits>

namespace ustat {

// Purpose tags for stream derivation. Distinct tags give statistically
// unrelated streams even when (seed, rep, index) coincide.
enum class Stream : std::uint64_t {
    data = 1,        // observation draws
    design = 2,      // fixed-design objects (instrument matrices, bases)
    quad = 3,        // quadrature node sets
    pair_alpha = 4,  // exchangeable-pair index draws
    pair_copy = 5,   // exchangeable-pair replacement draws
    gauss = 6,       // multivariate normal sampling
    rect = 7,        // random rectangle construction
    perm = 8,        // permutation tests
    tuples = 9,      // index-tuple subsampling
    eval = 10,       // generic scratch evaluations
    latent = 11,     // latent variables of exchangeable arrays
    moments = 12,    // build-time moment cross-checks
};

namespace detail {
// splitmix64 finalizer; full 64-bit avalanche.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: every draw is a pure function of
// (seed, stream, rep, index, counter). Instances never share state, so
// replications and workers can draw concurrently with no coordination and
// results are independent of scheduling.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, Stream stream, std::uint64_t rep = 0,
               std::uint64_t index = 0)
        : key_(derive_key(seed, static_cast<std::uint64_t>(stream), rep, index)) {}

    std::uint64_t next_u64() { return detail::mix64(key_ ^ counter_++); }

    // Uniform on (0,1), never returning the endpoints.
    double next_unit() {
        const std::uint64_t u = next_u64() >> 11;  // top 53 bits
        return (static_cast<double>(u) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double next_uniform(double a, double b) { return a + (b - a) * next_unit(); }

    double next_normal() { return normal_icdf(next_unit()); }

    double next_exponential() { return -std::log(next_unit()); }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // 64-bit multiply-shift; bias is < 2^-53 for the n used here.
        return static_cast<std::uint64_t>(next_unit() * static_cast<double>(n)) % n;
    }

    // Inverse normal CDF, Wichura's AS 241 (PPND16). Relative error ~1e-16;
    // one uniform maps to one normal, which keeps draw counts predictable.
    static double normal_icdf(double p) {
        const double q = p - 0.5;
        if (q > -0.425 && q < 0.425) {
            const double r = 0.180625 - q * q;
            return q *
                   (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                         67265.770927008700853) * r + 45921.953931549871457) * r +
                       13731.693765509461125) * r + 1971.5909503065514427) * r +
                     133.14166789178437745) * r + 3.387132872796366608) /
                   (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                         39307.89580009271061) * r + 21213.794301586595867) * r +
                       5394.1960214247511077) * r + 687.1870074920579083) * r +
                     42.313330701600911252) * r + 1.0);
        }
        double r = (q < 0.0) ? p : 1.0 - p;
        r = std::sqrt(-std::log(r));
        double v;
        if (r <= 5.0) {
            r -= 1.6;
            v = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                      0.24178072517745061177) * r + 1.27045825245236838258) * r +
                    3.64784832476320460504) * r + 5.7694972214606914055) * r +
                  4.6303378461565452959) * r + 1.42343711074968357734) /
                (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                      0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                    0.68976733498510000455) * r + 1.6763848301838038494) * r +
                  2.05319162663775882187) * r + 1.0);
        } else {
            r -= 5.0;
            v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                      0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                    0.29656057182850489123) * r + 1.7848265399172913358) * r +
                  5.4637849111641143699) * r + 6.6579046435011037772) /
                (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                      1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                    0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                  0.59983220655588793769) * r + 1.0);
        }
        return (q < 0.0) ? -v : v;
    }

private:
    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t rep, std::uint64_t index) {
        std::uint64_t k = detail::mix64(seed ^ 0x243f6a8885a308d3ull);
        k = detail::mix64(k ^ stream);
        k = detail::mix64(k ^ rep);
        k = detail::mix64(k ^ index);
        return k;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace ustat
