#pragma once

#include <cmath>
#include <random>
#include <string_view>
#include <vector>

#include "liquid/cells.hpp"

namespace testing {

// Same deterministic fill as tests/oracles/oracles.py.
inline int array_index(std::string_view name) {
    constexpr std::string_view names[] = {"g_l", "e_l", "g", "k", "a", "b",
                                          "o", "p", "kappa_raw", "w", "bias"};
    for (int i = 0; i < 11; ++i) {
        if (names[i] == name) {
            return i;
        }
    }
    return -1;
}

inline liquid::CellParameters oracle_parameters(liquid::CellKind kind, std::size_t m,
                                                std::size_t n, double dt) {
    liquid::CellParameters p = liquid::zero_parameters(kind, m, n, dt);
    p.visit([](std::string_view name, std::vector<double>& v, bool) {
        const int a = array_index(name);
        for (std::size_t k = 0; k < v.size(); ++k) {
            v[k] = 0.9 * std::sin(1.7 * static_cast<double>(k) + 0.3 * a + 0.11);
        }
    });
    return p;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) {
        x = d(rng);
    }
    return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = a.size() == b.size() ? 0.0 : INFINITY;
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

} // namespace testing
