#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ervq/matrix.hpp"
#include "ervq/numerics.hpp"

namespace ervq {

// Smoothing inside the log of the reverse balancing loss.
inline constexpr double kBalancingDelta = 1e-8;

/// Empirical code-selection distribution of one quantizer stage.
struct BalancingStats {
    std::vector<double> posterior;   // f_k, sums to 1
    std::size_t batch_features = 0;  // B*L
};

/// f_k = count(k) / (number of quantized features).
inline BalancingStats posterior_distribution(std::span<const std::uint32_t> indices,
                                             std::size_t K) {
    if (K == 0) throw std::invalid_argument("posterior_distribution: K must be >= 1");
    if (indices.empty()) {
        throw std::invalid_argument("posterior_distribution: empty index batch");
    }
    BalancingStats out;
    out.posterior.assign(K, 0.0);
    for (std::uint32_t idx : indices) {
        if (idx >= K) {
            throw std::invalid_argument("posterior_distribution: index " +
                                        std::to_string(idx) + " out of range");
        }
        out.posterior[idx] += 1.0;
    }
    out.batch_features = indices.size();
    for (double& f : out.posterior) f /= static_cast<double>(indices.size());
    return out;
}

/// Soft-assignment posterior: rows of softmax(-distances) averaged over the
/// batch. Differentiable alternative to the hard one-hot counts; not the
/// default in training.
inline BalancingStats soft_posterior_distribution(const Matrix& distances) {
    if (distances.rows() == 0 || distances.cols() == 0) {
        throw std::invalid_argument("soft_posterior_distribution: empty distances");
    }
    BalancingStats out;
    out.posterior.assign(distances.cols(), 0.0);
    out.batch_features = distances.rows();
    std::vector<double> neg(distances.cols());
    for (std::size_t i = 0; i < distances.rows(); ++i) {
        for (std::size_t k = 0; k < distances.cols(); ++k) neg[k] = -distances(i, k);
        std::vector<double> p = softmax(neg);
        for (std::size_t k = 0; k < distances.cols(); ++k) out.posterior[k] += p[k];
    }
    for (double& f : out.posterior) f /= static_cast<double>(distances.rows());
    return out;
}

enum class BalancingMode { literal, reverse };

/// Code balancing loss over all stages.
///
/// literal: -sum_m sum_k f_k log(1/K). Since sum_k f_k == 1 each stage
/// contributes exactly log K, so the value is computed in that closed form.
/// reverse (default): -sum_m sum_k (1/K) log(f_k + delta), the
/// cross-entropy with the roles swapped; minimized at the uniform posterior.
inline double code_balancing_loss(std::span<const BalancingStats> stages,
                                  BalancingMode mode, double delta = kBalancingDelta) {
    for (const auto& s : stages) {
        if (s.posterior.empty()) {
            throw std::invalid_argument("code_balancing_loss: empty posterior");
        }
    }
    if (mode == BalancingMode::literal) {
        if (stages.empty()) return 0.0;
        const std::size_t k0 = stages[0].posterior.size();
        bool uniform_k = true;
        for (const auto& s : stages) uniform_k &= (s.posterior.size() == k0);
        if (uniform_k) {
            return static_cast<double>(stages.size()) * std::log(static_cast<double>(k0));
        }
        double acc = 0.0;
        for (const auto& s : stages) acc += std::log(static_cast<double>(s.posterior.size()));
        return acc;
    }
    double acc = 0.0;
    for (const auto& s : stages) {
        const double inv_k = 1.0 / static_cast<double>(s.posterior.size());
        for (double f : s.posterior) acc -= inv_k * std::log(f + delta);
    }
    return acc;
}

struct SsimParams {
    double c1 = 1e-4;
    double c2 = 9e-4;
};

/// Structural similarity of two vectors using population moments over the
/// whole vector (no sliding window).
inline double ssim(std::span<const double> x, std::span<const double> y,
                   const SsimParams& p = {}) {
    if (x.size() != y.size()) throw std::invalid_argument("ssim: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("ssim: vectors must have length >= 2");
    if (!(p.c1 > 0.0) || !(p.c2 > 0.0)) {
        throw std::invalid_argument("ssim: c1 and c2 must be positive");
    }
    PairStats s = stats(x, y);
    double a = 2.0 * s.mean_x * s.mean_y + p.c1;
    double b = 2.0 * s.cov_xy + p.c2;
    double c = s.mean_x * s.mean_x + s.mean_y * s.mean_y + p.c1;
    double d = s.var_x + s.var_y + p.c2;
    return (a * b) / (c * d);
}

/// Sum over adjacent stage pairs (m, m+1) of the batch-mean SSIM between
/// corresponding rows. Zero for a single stage.
inline double inter_codebook_ssim_loss(std::span<const Matrix> stage_outputs,
                                       const SsimParams& p = {}) {
    if (stage_outputs.empty()) {
        throw std::invalid_argument("inter_codebook_ssim_loss: no stages");
    }
    for (std::size_t m = 1; m < stage_outputs.size(); ++m) {
        require_same_shape(stage_outputs[0], stage_outputs[m], "inter_codebook_ssim_loss");
    }
    if (stage_outputs.size() == 1) return 0.0;
    const std::size_t L = stage_outputs[0].rows();
    if (L == 0) throw std::invalid_argument("inter_codebook_ssim_loss: empty batch");
    double total = 0.0;
    for (std::size_t m = 0; m + 1 < stage_outputs.size(); ++m) {
        double pair_sum = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            pair_sum += ssim(stage_outputs[m].row(i), stage_outputs[m + 1].row(i), p);
        }
        total += pair_sum / static_cast<double>(L);
    }
    return total;
}

struct LossWeights {
    double alpha = 0.1;              // code balancing weight
    double beta = 0.01;              // inter-codebook SSIM weight
    double commitment_weight = 0.25;

    void validate() const {
        if (!std::isfinite(alpha) || alpha < 0.0) {
            throw std::invalid_argument("LossWeights: alpha must be finite and >= 0");
        }
        if (!std::isfinite(beta) || beta < 0.0) {
            throw std::invalid_argument("LossWeights: beta must be finite and >= 0");
        }
        if (!std::isfinite(commitment_weight) || commitment_weight < 0.0) {
            throw std::invalid_argument("LossWeights: commitment_weight must be finite and >= 0");
        }
    }
};

/// codec_loss + alpha*balancing + beta*ssim_term.
inline double total_loss(double codec_loss, double balancing, double ssim_term,
                         const LossWeights& w) {
    if (!std::isfinite(codec_loss) || !std::isfinite(balancing) || !std::isfinite(ssim_term)) {
        throw std::invalid_argument("total_loss: non-finite input");
    }
    w.validate();
    return codec_loss + w.alpha * balancing + w.beta * ssim_term;
}

struct LossBreakdown {
    double codec_loss = 0.0;
    double commitment = 0.0;
    double balancing = 0.0;
    double ssim = 0.0;
    double total = 0.0;
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string loss_csv_header() {
    return "step,codec_loss,commitment,balancing,ssim,total";
}

inline std::string loss_csv_row(std::size_t step, const LossBreakdown& b) {
    return std::to_string(step) + "," + format_double(b.codec_loss) + "," +
           format_double(b.commitment) + "," + format_double(b.balancing) + "," +
           format_double(b.ssim) + "," + format_double(b.total);
}

}  // namespace ervq
