#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ustat {

using Obs = Eigen::VectorXd;            // one observation (per-index dimension)
using ObsRef = const Eigen::VectorXd&;

// Error taxonomy. The CLI maps ConfigError/UsageError to exit code 2 and
// NumericalError (and derived) to exit code 3.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SingularityError : NumericalError {
    using NumericalError::NumericalError;
};
struct DegeneracyError : NumericalError {
    using NumericalError::NumericalError;
};

inline bool is_finite(double v) { return std::isfinite(v); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

// Sum f(0..count-1) in fixed chunks, chunk results added in index order.
// The grouping depends only on `chunk_size`, never on the number of workers,
// so parallel callers that fill one slot per chunk reproduce the serial bits.
template <class F>
double ordered_chunk_sum(std::int64_t count, std::int64_t chunk_size, F&& f) {
    if (count <= 0) return 0.0;
    const std::int64_t nchunks = (count + chunk_size - 1) / chunk_size;
    double total = 0.0;
    for (std::int64_t c = 0; c < nchunks; ++c) {
        const std::int64_t lo = c * chunk_size;
        const std::int64_t hi = std::min(count, lo + chunk_size);
        double part = 0.0;
        for (std::int64_t k = lo; k < hi; ++k) part += f(k);
        total += part;
    }
    return total;
}

// log(p) floored at 1 (the bounds assume p >= 3, log p > 1; tiny p appears
// only in test configurations).
inline double log_p(int p) { return std::max(1.0, std::log(static_cast<double>(p))); }

inline double sq(double x) { return x * x; }

struct MeanSe {
    double value = 0.0;
    double se = 0.0;
};

// Sample mean and its standard error.
inline MeanSe mean_se(const std::vector<double>& xs) {
    const auto n = static_cast<double>(xs.size());
    if (xs.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : xs) m += x;
    m /= n;
    double s2 = 0.0;
    for (double x : xs) s2 += sq(x - m);
    s2 = (xs.size() > 1) ? s2 / (n - 1.0) : 0.0;
    return {m, std::sqrt(s2 / n)};
}

}  // namespace ustat
