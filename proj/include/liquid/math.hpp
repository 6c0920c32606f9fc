#pragma once

#include <cmath>

namespace liquid {

/// Logistic sigmoid, evaluated without overflow for large |z|.
inline double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double sigmoid_prime_from_value(double s) { return s * (1.0 - s); }

inline double tanh_prime_from_value(double t) { return 1.0 - t * t; }

} // namespace liquid
