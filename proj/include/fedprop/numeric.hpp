#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace fedprop {

// Tree sum with fixed fan-in.  The reduction order depends only on the
// buffer layout, never on thread count, so callers that fill a buffer in
// parallel and reduce it with this get bitwise-reproducible totals.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double acc = 0.0;
        for (double x : xs) acc += x;
        return acc;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

inline bool all_finite(std::span<const double> a) {
    for (double x : a)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log(exp(a) + exp(b)) for two terms; tolerates -inf in either slot.
inline double log_sum_exp2(double a, double b) {
    const double hi = std::max(a, b);
    if (hi == -std::numeric_limits<double>::infinity()) return hi;
    const double lo = std::min(a, b);
    if (lo == -std::numeric_limits<double>::infinity()) return hi;
    return hi + std::log1p(std::exp(lo - hi));
}

inline double gaussian_log_pdf(double x, double mu, double sigma) {
    static const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

}  // namespace fedprop
