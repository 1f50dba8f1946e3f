#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ervq/codebook.hpp"
#include "ervq/matrix.hpp"
#include "ervq/numerics.hpp"
#include "ervq/rng.hpp"

namespace ervq {

/// Per-codeword accumulated average usage and the decay coefficients
/// derived from it. usage starts at zero for every codeword.
struct UsageTracker {
    std::vector<double> usage;  // U_k
    double gamma;
    double epsilon;
    std::vector<double> decay;  // d_k, filled by compute_decay

    UsageTracker(std::size_t K, double gamma_ = 0.999, double epsilon_ = 1e-3)
        : usage(K, 0.0), gamma(gamma_), epsilon(epsilon_), decay(K, 0.0) {
        if (K == 0) throw std::invalid_argument("UsageTracker: K must be >= 1");
        if (!(gamma > 0.0 && gamma < 1.0)) {
            throw std::invalid_argument("UsageTracker: gamma must be in (0,1)");
        }
        if (!(epsilon >= 0.0)) {
            throw std::invalid_argument("UsageTracker: epsilon must be >= 0");
        }
    }
};

/// usage[k] <- usage[k]*gamma + (counts[k]/L)*(1-gamma).
inline void update_usage(UsageTracker& tr, std::span<const std::size_t> counts,
                         std::size_t total) {
    if (counts.size() != tr.usage.size()) {
        throw std::invalid_argument("update_usage: counts length != K");
    }
    if (total == 0) throw std::invalid_argument("update_usage: total must be >= 1");
    std::size_t sum = 0;
    for (std::size_t c : counts) sum += c;
    if (sum != total) {
        throw std::invalid_argument("update_usage: counts sum to " + std::to_string(sum) +
                                    ", expected " + std::to_string(total));
    }
    const double L = static_cast<double>(total);
    for (std::size_t k = 0; k < counts.size(); ++k) {
        tr.usage[k] = tr.usage[k] * tr.gamma +
                      (static_cast<double>(counts[k]) / L) * (1.0 - tr.gamma);
    }
}

/// decay[k] = exp(-usage[k]*K*10/(1-gamma) - epsilon). Heavily used
/// codewords underflow to zero; a never-used codeword sits at exp(-eps).
inline std::vector<double> compute_decay(UsageTracker& tr) {
    const double K = static_cast<double>(tr.usage.size());
    for (std::size_t k = 0; k < tr.usage.size(); ++k) {
        tr.decay[k] = std::exp(-tr.usage[k] * K * 10.0 / (1.0 - tr.gamma) - tr.epsilon);
    }
    return tr.decay;
}

enum class AnchorKind { probabilistic, random_uniform, closest };

struct AnchorPolicy {
    AnchorKind kind = AnchorKind::probabilistic;
    // The printed form of the sampling distribution softmaxes raw distances,
    // which favours the farthest features. Default favours near features
    // (softmax of negative distances); set this to restore the printed form.
    bool literal_paper_softmax = false;
};

/// One anchor feature per codeword.
///   probabilistic: sample feature i for codeword k from a softmax across
///                  the batch of (-)distances[i][k]
///   random:        uniform over the L features
///   closest:       argmin_i distances[i][k], ties to the lowest i
inline Matrix sample_anchors(const Matrix& features, const Matrix& distances,
                             const AnchorPolicy& policy, Rng& rng) {
    if (features.rows() == 0) {
        throw std::invalid_argument("sample_anchors: empty feature batch");
    }
    if (distances.rows() != features.rows()) {
        throw std::invalid_argument("sample_anchors: distances rows != feature rows");
    }
    const std::size_t L = features.rows();
    const std::size_t K = distances.cols();
    const std::size_t N = features.cols();
    Matrix anchors(K, N);
    std::vector<double> scores(L);
    for (std::size_t k = 0; k < K; ++k) {
        std::size_t pick = 0;
        switch (policy.kind) {
            case AnchorKind::probabilistic: {
                for (std::size_t i = 0; i < L; ++i) {
                    scores[i] = policy.literal_paper_softmax ? distances(i, k)
                                                             : -distances(i, k);
                }
                pick = rng.sample_discrete(softmax(scores));
                break;
            }
            case AnchorKind::random_uniform:
                pick = rng.next_index(L);
                break;
            case AnchorKind::closest: {
                double best = distances(0, k);
                for (std::size_t i = 1; i < L; ++i) {
                    if (distances(i, k) < best) {
                        best = distances(i, k);
                        pick = i;
                    }
                }
                break;
            }
        }
        auto src = features.row(pick);
        auto dst = anchors.row(k);
        for (std::size_t j = 0; j < N; ++j) dst[j] = src[j];
    }
    return anchors;
}

/// vectors[k] <- vectors[k]*(1-decay[k]) + anchors[k]*decay[k], applied to
/// every codeword (the decay coefficient does the gating, no threshold).
/// Evaluated as e + d*(anchor - e) so zero decay and self-anchors leave
/// the codeword bit-identical.
inline void reinit_codewords(Codebook& cb, std::span<const double> decay,
                             const Matrix& anchors) {
    if (decay.size() != cb.size()) {
        throw std::invalid_argument("reinit_codewords: decay length != K");
    }
    if (anchors.rows() != cb.size() || anchors.cols() != cb.dim()) {
        throw std::invalid_argument("reinit_codewords: anchors shape mismatch");
    }
    for (std::size_t k = 0; k < cb.size(); ++k) {
        for (std::size_t j = 0; j < cb.dim(); ++j) {
            cb.vectors(k, j) += decay[k] * (anchors(k, j) - cb.vectors(k, j));
        }
    }
}

inline const char* anchor_kind_name(AnchorKind k) {
    switch (k) {
        case AnchorKind::probabilistic: return "probabilistic";
        case AnchorKind::random_uniform: return "random";
        case AnchorKind::closest: return "closest";
    }
    return "probabilistic";
}

inline AnchorKind anchor_kind_from_name(const std::string& name) {
    if (name == "probabilistic") return AnchorKind::probabilistic;
    if (name == "random") return AnchorKind::random_uniform;
    if (name == "closest") return AnchorKind::closest;
    throw std::invalid_argument("unknown anchor policy '" + name + "'");
}

inline nlohmann::json usage_tracker_to_json(const UsageTracker& tr) {
    return nlohmann::json{{"usage", tr.usage},
                          {"gamma", tr.gamma},
                          {"epsilon", tr.epsilon},
                          {"decay", tr.decay}};
}

inline UsageTracker usage_tracker_from_json(const nlohmann::json& j) {
    auto usage = j.at("usage").get<std::vector<double>>();
    UsageTracker tr(usage.size(), j.at("gamma").get<double>(), j.at("epsilon").get<double>());
    tr.usage = std::move(usage);
    tr.decay = j.at("decay").get<std::vector<double>>();
    if (tr.decay.size() != tr.usage.size()) {
        throw std::invalid_argument("usage_tracker JSON: decay length != usage length");
    }
    return tr;
}

}  // namespace ervq
