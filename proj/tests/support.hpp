#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dehrl/approx.hpp"

namespace testing {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v)
        x = d(rng);
    return v;
}

// Norm-wise relative error between two gradient vectors.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nb));
    return scale == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

// Central differences of f over every coordinate of params (restored afterwards).
inline std::vector<double> numeric_gradient(std::span<double> params, const std::function<double()>& f,
                                            double h = 1e-6) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = f();
        params[i] = keep - h;
        const double down = f();
        params[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

}  // namespace testing
