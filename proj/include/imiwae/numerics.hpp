#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace imiwae {

inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Inverse of softplus; y must be > 0.
inline double softplus_inverse(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow for large |x|
inline double log_sigmoid(double x) { return -softplus(-x); }

inline double logsumexp(const Eigen::VectorXd& v) {
    double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

// log N(x | mu, sigma^2) with standard deviation sigma
inline double log_normal_pdf(double x, double mu, double sigma) {
    double z = (x - mu) / sigma;
    return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * z * z;
}

}  // namespace imiwae
