#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ervq/matrix.hpp"
#include "ervq/numerics.hpp"

namespace ervq {

// Laplace constant in the EMA mean, guards the division for barely-used codes.
inline constexpr double kEmaLaplace = 1e-12;

/// One quantizer stage: K code vectors of dimension N plus the EMA
/// accumulators that drive k-means-style codebook learning.
struct Codebook {
    Matrix vectors;                        // KxN code vectors
    std::vector<double> ema_cluster_size;  // K, starts at zero
    Matrix ema_embed_sum;                  // KxN, starts at zero

    explicit Codebook(Matrix initial_vectors)
        : vectors(std::move(initial_vectors)),
          ema_cluster_size(vectors.rows(), 0.0),
          ema_embed_sum(vectors.rows(), vectors.cols()) {
        if (vectors.rows() == 0 || vectors.cols() == 0) {
            throw std::invalid_argument("Codebook: K and N must be >= 1");
        }
    }

    std::size_t size() const { return vectors.rows(); }
    std::size_t dim() const { return vectors.cols(); }
};

struct QuantizeOutput {
    std::vector<std::uint32_t> indices;  // L chosen codeword ids
    Matrix quantized;                    // LxN, exact codebook rows
    Matrix distances;                    // LxK squared distances
};

/// Nearest codeword per feature row under squared Euclidean distance.
/// Ties break to the lowest codeword index.
inline QuantizeOutput quantize(const Matrix& features, const Codebook& cb) {
    if (features.cols() != cb.dim()) {
        throw std::invalid_argument("quantize: feature dim " +
                                    std::to_string(features.cols()) +
                                    " != codebook dim " + std::to_string(cb.dim()));
    }
    QuantizeOutput out;
    out.distances = pairwise_sq_dist(features, cb.vectors);
    out.indices.resize(features.rows());
    out.quantized = Matrix(features.rows(), cb.dim());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        std::size_t best = 0;
        double best_d = out.distances(i, 0);
        for (std::size_t k = 1; k < cb.size(); ++k) {
            if (out.distances(i, k) < best_d) {
                best_d = out.distances(i, k);
                best = k;
            }
        }
        out.indices[i] = static_cast<std::uint32_t>(best);
        auto src = cb.vectors.row(best);
        auto dst = out.quantized.row(i);
        for (std::size_t j = 0; j < cb.dim(); ++j) dst[j] = src[j];
    }
    return out;
}

/// Identity backward pass of the quantization step: the gradient w.r.t.
/// the quantized output is copied unchanged to the features.
inline Matrix straight_through(const Matrix& grad_wrt_quantized) {
    return grad_wrt_quantized;
}

/// Mean over rows of ||z_i - zhat_i||^2. Gradient flows to features only;
/// the quantized argument is treated as constant.
inline double commitment_loss(const Matrix& features, const Matrix& quantized) {
    require_same_shape(features, quantized, "commitment_loss");
    if (features.rows() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        for (std::size_t j = 0; j < features.cols(); ++j) {
            double d = features(i, j) - quantized(i, j);
            acc += d * d;
        }
    }
    return acc / static_cast<double>(features.rows());
}

inline std::vector<std::size_t> count_assignments(std::span<const std::uint32_t> indices,
                                                  std::size_t K) {
    std::vector<std::size_t> counts(K, 0);
    for (std::uint32_t idx : indices) {
        if (idx >= K) {
            throw std::invalid_argument("invalid codeword index " + std::to_string(idx) +
                                        " for codebook of size " + std::to_string(K));
        }
        ++counts[idx];
    }
    return counts;
}

/// EMA k-means codebook update. Cluster sizes and embed sums decay with
/// factor gamma; code vectors are refreshed only for codewords that
/// received at least one feature this batch (unused rows are left to the
/// online-clustering reinit).
inline void ema_kmeans_update(Codebook& cb, const Matrix& features,
                              std::span<const std::uint32_t> indices, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw std::invalid_argument("ema_kmeans_update: gamma must be in (0,1)");
    }
    if (features.rows() != indices.size() || features.cols() != cb.dim()) {
        throw std::invalid_argument("ema_kmeans_update: shape mismatch");
    }
    const std::size_t K = cb.size();
    const std::size_t N = cb.dim();
    std::vector<std::size_t> counts = count_assignments(indices, K);
    Matrix sums(K, N);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        auto dst = sums.row(indices[i]);
        auto src = features.row(i);
        for (std::size_t j = 0; j < N; ++j) dst[j] += src[j];
    }
    for (std::size_t k = 0; k < K; ++k) {
        cb.ema_cluster_size[k] =
            gamma * cb.ema_cluster_size[k] + (1.0 - gamma) * static_cast<double>(counts[k]);
        for (std::size_t j = 0; j < N; ++j) {
            cb.ema_embed_sum(k, j) = gamma * cb.ema_embed_sum(k, j) + (1.0 - gamma) * sums(k, j);
        }
        if (counts[k] > 0) {
            double denom = cb.ema_cluster_size[k] + kEmaLaplace;
            for (std::size_t j = 0; j < N; ++j) {
                cb.vectors(k, j) = cb.ema_embed_sum(k, j) / denom;
            }
        }
    }
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t expect_cols = 0) {
    if (!j.is_array()) throw std::invalid_argument("matrix JSON: expected array of rows");
    std::size_t rows = j.size();
    std::size_t cols = expect_cols;
    std::vector<double> values;
    for (const auto& row : j) {
        if (!row.is_array()) throw std::invalid_argument("matrix JSON: row is not an array");
        if (cols == 0) cols = row.size();
        if (row.size() != cols) throw std::invalid_argument("matrix JSON: ragged rows");
        for (const auto& v : row) values.push_back(v.get<double>());
    }
    if (rows == 0) return Matrix(0, expect_cols);
    return Matrix(rows, cols, std::move(values));
}

inline nlohmann::json codebook_to_json(const Codebook& cb) {
    return nlohmann::json{{"K", cb.size()},
                          {"N", cb.dim()},
                          {"vectors", matrix_to_json(cb.vectors)},
                          {"ema_cluster_size", cb.ema_cluster_size},
                          {"ema_embed_sum", matrix_to_json(cb.ema_embed_sum)}};
}

inline Codebook codebook_from_json(const nlohmann::json& j) {
    std::size_t K = j.at("K").get<std::size_t>();
    std::size_t N = j.at("N").get<std::size_t>();
    Codebook cb(matrix_from_json(j.at("vectors"), N));
    if (cb.size() != K || cb.dim() != N) {
        throw std::invalid_argument("codebook JSON: vectors shape disagrees with K/N");
    }
    cb.ema_cluster_size = j.at("ema_cluster_size").get<std::vector<double>>();
    if (cb.ema_cluster_size.size() != K) {
        throw std::invalid_argument("codebook JSON: ema_cluster_size length != K");
    }
    for (double v : cb.ema_cluster_size) {
        if (!(v >= 0.0)) throw std::invalid_argument("codebook JSON: negative ema_cluster_size");
    }
    cb.ema_embed_sum = matrix_from_json(j.at("ema_embed_sum"), N);
    if (cb.ema_embed_sum.rows() != K) {
        throw std::invalid_argument("codebook JSON: ema_embed_sum shape mismatch");
    }
    return cb;
}

}  // namespace ervq
