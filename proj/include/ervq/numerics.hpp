#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ervq/matrix.hpp"

namespace ervq {

/// Squared Euclidean distances between every row of `a` (LxN) and every
/// row of `b` (KxN), returned as LxK. Accumulation is left-to-right over
/// columns so results are reproducible bit for bit.
inline Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("pairwise_sq_dist: dimension mismatch");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ai = a.row(i);
        for (std::size_t k = 0; k < b.rows(); ++k) {
            auto bk = b.row(k);
            double acc = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) {
                double d = ai[j] - bk[j];
                acc += d * d;
            }
            out(i, k) = acc;
        }
    }
    return out;
}

/// Numerically stable softmax (max-subtracted exponentials).
inline std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    double hi = v[0];
    for (double x : v) {
        if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
        hi = std::max(hi, x);
    }
    std::vector<double> out(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - hi);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return out;
}

struct PairStats {
    double mean_x = 0.0;
    double mean_y = 0.0;
    double var_x = 0.0;
    double var_y = 0.0;
    double cov_xy = 0.0;
};

/// Population (divide-by-n) means, variances and covariance of two
/// equal-length vectors.
inline PairStats stats(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("stats: length mismatch");
    if (x.empty()) throw std::invalid_argument("stats: empty input");
    const double n = static_cast<double>(x.size());
    PairStats s;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s.mean_x += x[i];
        s.mean_y += y[i];
    }
    s.mean_x /= n;
    s.mean_y /= n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - s.mean_x;
        double dy = y[i] - s.mean_y;
        s.var_x += dx * dx;
        s.var_y += dy * dy;
        s.cov_xy += dx * dy;
    }
    s.var_x /= n;
    s.var_y /= n;
    s.cov_xy /= n;
    return s;
}

}  // namespace ervq
