#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ervq/codebook.hpp"
#include "ervq/losses.hpp"
#include "ervq/matrix.hpp"
#include "ervq/online_clustering.hpp"
#include "ervq/rng.hpp"

namespace ervq {

struct IndexMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint32_t> values;  // row-major

    IndexMatrix() = default;
    IndexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0) {}

    std::uint32_t& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    std::uint32_t operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    friend bool operator==(const IndexMatrix&, const IndexMatrix&) = default;
};

struct RvqStage {
    Codebook codebook;
    UsageTracker usage;
    AnchorPolicy anchors;

    RvqStage(Codebook cb, UsageTracker tr, AnchorPolicy policy = {})
        : codebook(std::move(cb)), usage(std::move(tr)), anchors(policy) {
        if (usage.usage.size() != codebook.size()) {
            throw std::invalid_argument("RvqStage: tracker K != codebook K");
        }
    }
};

/// Ordered cascade of quantizer stages sharing one feature dimension.
struct RvqStack {
    std::vector<RvqStage> stages;
    LossWeights weights;
    BalancingMode balancing_mode = BalancingMode::reverse;
    SsimParams ssim_params;
    // When false the reinit step is skipped entirely (decay treated as zero),
    // which reduces train_step to plain EMA k-means per stage.
    bool online_clustering = true;

    std::size_t depth() const { return stages.size(); }
    std::size_t dim() const { return stages.empty() ? 0 : stages[0].codebook.dim(); }

    void validate() const {
        if (stages.empty()) throw std::invalid_argument("RvqStack: needs at least one stage");
        for (const auto& st : stages) {
            if (st.codebook.dim() != dim()) {
                throw std::invalid_argument("RvqStack: stages must share dim N");
            }
        }
        weights.validate();
    }
};

struct QuantizationResult {
    Matrix summed;                      // LxN, left-to-right sum of stage outputs
    IndexMatrix indices;                // LxM
    std::vector<Matrix> stage_outputs;  // M matrices of LxN
    Matrix final_residual;              // input - summed, single subtraction
};

/// Residual quantization: stage 1 quantizes the features, each later stage
/// quantizes what the previous stages left over.
inline QuantizationResult rvq_quantize(const Matrix& features, const RvqStack& stack) {
    stack.validate();
    if (features.cols() != stack.dim()) {
        throw std::invalid_argument("rvq_quantize: feature dim != stack dim");
    }
    const std::size_t L = features.rows();
    const std::size_t M = stack.depth();
    const std::size_t N = stack.dim();

    QuantizationResult result;
    result.indices = IndexMatrix(L, M);
    result.stage_outputs.reserve(M);

    Matrix residual = features;
    for (std::size_t m = 0; m < M; ++m) {
        QuantizeOutput q = quantize(residual, stack.stages[m].codebook);
        for (std::size_t i = 0; i < L; ++i) {
            result.indices(i, m) = q.indices[i];
            for (std::size_t j = 0; j < N; ++j) residual(i, j) -= q.quantized(i, j);
        }
        result.stage_outputs.push_back(std::move(q.quantized));
    }

    result.summed = Matrix(L, N);
    for (const Matrix& out : result.stage_outputs) {
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < N; ++j) result.summed(i, j) += out(i, j);
        }
    }
    result.final_residual = Matrix(L, N);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            result.final_residual(i, j) = features(i, j) - result.summed(i, j);
        }
    }
    return result;
}

/// Sum of the indexed codebook rows, accumulated in the same stage order as
/// rvq_quantize so the two agree bit for bit.
inline Matrix decode(const IndexMatrix& indices, const RvqStack& stack) {
    stack.validate();
    if (indices.cols != stack.depth()) {
        throw std::invalid_argument("decode: index columns != stack depth");
    }
    const std::size_t L = indices.rows;
    const std::size_t N = stack.dim();
    Matrix out(L, N);
    for (std::size_t m = 0; m < stack.depth(); ++m) {
        const Codebook& cb = stack.stages[m].codebook;
        for (std::size_t i = 0; i < L; ++i) {
            std::uint32_t idx = indices(i, m);
            if (idx >= cb.size()) {
                throw std::invalid_argument("decode: index " + std::to_string(idx) +
                                            " out of range for stage " + std::to_string(m));
            }
            auto src = cb.vectors.row(idx);
            for (std::size_t j = 0; j < N; ++j) out(i, j) += src[j];
        }
    }
    return out;
}

/// One training batch through the stack. Per stage, in order: quantize,
/// update usage, EMA k-means update of the used codewords, decay, anchor
/// sampling, reinit. Stage m+1 quantizes the residual left by stage m's
/// pre-update codebook. Losses are computed from the actual (pre-update)
/// quantization outputs; codec_loss is left at zero for the caller.
inline std::pair<QuantizationResult, LossBreakdown> train_step(const Matrix& features,
                                                               RvqStack& stack, Rng& rng) {
    stack.validate();
    if (features.cols() != stack.dim()) {
        throw std::invalid_argument("train_step: feature dim != stack dim");
    }
    if (features.rows() == 0) {
        throw std::invalid_argument("train_step: empty feature batch");
    }
    const std::size_t L = features.rows();
    const std::size_t M = stack.depth();
    const std::size_t N = stack.dim();

    QuantizationResult result;
    result.indices = IndexMatrix(L, M);
    result.stage_outputs.reserve(M);

    LossBreakdown lb;
    std::vector<BalancingStats> balancing(M);

    Matrix residual = features;
    for (std::size_t m = 0; m < M; ++m) {
        RvqStage& st = stack.stages[m];
        QuantizeOutput q = quantize(residual, st.codebook);

        lb.commitment += commitment_loss(residual, q.quantized);
        balancing[m] = posterior_distribution(q.indices, st.codebook.size());

        std::vector<std::size_t> counts = count_assignments(q.indices, st.codebook.size());
        update_usage(st.usage, counts, L);
        ema_kmeans_update(st.codebook, residual, q.indices, st.usage.gamma);
        if (stack.online_clustering) {
            compute_decay(st.usage);
            Matrix anchors = sample_anchors(residual, q.distances, st.anchors, rng);
            reinit_codewords(st.codebook, st.usage.decay, anchors);
        }

        for (std::size_t i = 0; i < L; ++i) {
            result.indices(i, m) = q.indices[i];
            for (std::size_t j = 0; j < N; ++j) residual(i, j) -= q.quantized(i, j);
        }
        result.stage_outputs.push_back(std::move(q.quantized));
    }

    result.summed = Matrix(L, N);
    for (const Matrix& out : result.stage_outputs) {
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < N; ++j) result.summed(i, j) += out(i, j);
        }
    }
    result.final_residual = Matrix(L, N);
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            result.final_residual(i, j) = features(i, j) - result.summed(i, j);
        }
    }

    lb.balancing = code_balancing_loss(balancing, stack.balancing_mode);
    lb.ssim = inter_codebook_ssim_loss(result.stage_outputs, stack.ssim_params);
    lb.total = stack.weights.commitment_weight * lb.commitment +
               stack.weights.alpha * lb.balancing + stack.weights.beta * lb.ssim;
    return {std::move(result), lb};
}

inline const char* balancing_mode_name(BalancingMode m) {
    return m == BalancingMode::literal ? "literal" : "reverse";
}

inline BalancingMode balancing_mode_from_name(const std::string& name) {
    if (name == "literal") return BalancingMode::literal;
    if (name == "reverse") return BalancingMode::reverse;
    throw std::invalid_argument("unknown balancing mode '" + name + "'");
}

inline nlohmann::json stack_to_json(const RvqStack& stack) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& st : stack.stages) {
        nlohmann::json s = codebook_to_json(st.codebook);
        s["usage_tracker"] = usage_tracker_to_json(st.usage);
        s["anchor_policy"] = anchor_kind_name(st.anchors.kind);
        s["literal_paper_softmax"] = st.anchors.literal_paper_softmax;
        stages.push_back(std::move(s));
    }
    return nlohmann::json{{"stages", std::move(stages)},
                          {"weights",
                           {{"alpha", stack.weights.alpha},
                            {"beta", stack.weights.beta},
                            {"commitment_weight", stack.weights.commitment_weight}}},
                          {"balancing_mode", balancing_mode_name(stack.balancing_mode)},
                          {"ssim_params", {{"c1", stack.ssim_params.c1}, {"c2", stack.ssim_params.c2}}},
                          {"online_clustering", stack.online_clustering}};
}

inline RvqStack stack_from_json(const nlohmann::json& j) {
    RvqStack stack;
    for (const auto& s : j.at("stages")) {
        Codebook cb = codebook_from_json(s);
        UsageTracker tr = usage_tracker_from_json(s.at("usage_tracker"));
        AnchorPolicy policy;
        policy.kind = anchor_kind_from_name(s.at("anchor_policy").get<std::string>());
        policy.literal_paper_softmax = s.value("literal_paper_softmax", false);
        stack.stages.emplace_back(std::move(cb), std::move(tr), policy);
    }
    const auto& w = j.at("weights");
    stack.weights.alpha = w.at("alpha").get<double>();
    stack.weights.beta = w.at("beta").get<double>();
    stack.weights.commitment_weight = w.at("commitment_weight").get<double>();
    stack.balancing_mode = balancing_mode_from_name(j.value("balancing_mode", "reverse"));
    if (j.contains("ssim_params")) {
        stack.ssim_params.c1 = j["ssim_params"].at("c1").get<double>();
        stack.ssim_params.c2 = j["ssim_params"].at("c2").get<double>();
    }
    stack.online_clustering = j.value("online_clustering", true);
    stack.validate();
    return stack;
}

}  // namespace ervq
