#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ervq/formats.hpp"
#include "ervq/losses.hpp"
#include "ervq/matrix.hpp"
#include "ervq/rvq.hpp"

namespace ervq {

/// Fraction of codewords selected at least once.
inline double utilization_rate(std::span<const std::size_t> counts) {
    if (counts.empty()) throw std::invalid_argument("utilization_rate: empty counts");
    std::size_t used = 0;
    for (std::size_t c : counts) used += (c > 0) ? 1 : 0;
    return static_cast<double>(used) / static_cast<double>(counts.size());
}

/// 2^entropy of the code-selection distribution, entropy in bits and
/// 0*log2(0) taken as 0. Ranges from 1 (collapse) to K (uniform use).
inline double perplexity(std::span<const std::size_t> counts) {
    if (counts.empty()) throw std::invalid_argument("perplexity: empty counts");
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (total == 0) throw std::invalid_argument("perplexity: zero total count");
    double entropy_bits = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        entropy_bits -= p * std::log2(p);
    }
    return std::exp2(entropy_bits);
}

inline double stage_entropy_bits(std::span<const std::size_t> counts) {
    if (counts.empty()) throw std::invalid_argument("stage_entropy_bits: empty counts");
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (total == 0) throw std::invalid_argument("stage_entropy_bits: zero total count");
    double entropy_bits = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        entropy_bits -= p * std::log2(p);
    }
    return entropy_bits;
}

/// Summed per-stage selection entropy divided by the nominal bit budget
/// sum_m log2(K_m); 1.0 means no wasted bitrate.
inline double bitrate_efficiency(const std::vector<std::vector<std::size_t>>& counts_per_stage) {
    if (counts_per_stage.empty()) {
        throw std::invalid_argument("bitrate_efficiency: no stages");
    }
    double numerator = 0.0;
    double denominator = 0.0;
    for (const auto& counts : counts_per_stage) {
        if (counts.empty()) throw std::invalid_argument("bitrate_efficiency: empty stage");
        numerator += stage_entropy_bits(counts);
        denominator += std::log2(static_cast<double>(counts.size()));
    }
    if (!(denominator > 0.0)) {
        throw std::invalid_argument("bitrate_efficiency: zero bit budget (K must be >= 2)");
    }
    return numerator / denominator;
}

struct CodebookStats {
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    double utilization = 0.0;
    double perplexity = 1.0;
    std::vector<double> per_code_freq;
};

inline CodebookStats make_codebook_stats(std::vector<std::size_t> counts) {
    CodebookStats s;
    s.counts = std::move(counts);
    for (std::size_t c : s.counts) s.total += c;
    s.utilization = utilization_rate(s.counts);
    s.perplexity = perplexity(s.counts);
    s.per_code_freq.resize(s.counts.size());
    for (std::size_t k = 0; k < s.counts.size(); ++k) {
        s.per_code_freq[k] = static_cast<double>(s.counts[k]) / static_cast<double>(s.total);
    }
    return s;
}

/// Per-stage codeword counts from an LxM index matrix.
inline std::vector<std::vector<std::size_t>> stage_counts_from_indices(
    const IndexMatrix& indices, std::span<const std::size_t> codebook_sizes) {
    if (indices.cols != codebook_sizes.size()) {
        throw std::invalid_argument("stage_counts_from_indices: stage count mismatch");
    }
    std::vector<std::vector<std::size_t>> counts;
    counts.reserve(indices.cols);
    for (std::size_t m = 0; m < indices.cols; ++m) {
        std::vector<std::size_t> c(codebook_sizes[m], 0);
        for (std::size_t i = 0; i < indices.rows; ++i) {
            std::uint32_t idx = indices(i, m);
            if (idx >= codebook_sizes[m]) {
                throw std::invalid_argument("stage_counts_from_indices: index " +
                                            std::to_string(idx) + " out of range for stage " +
                                            std::to_string(m));
            }
            ++c[idx];
        }
        counts.push_back(std::move(c));
    }
    return counts;
}

inline nlohmann::json stats_report(const std::vector<std::vector<std::size_t>>& counts_per_stage) {
    nlohmann::json per_stage = nlohmann::json::array();
    for (const auto& counts : counts_per_stage) {
        per_stage.push_back({{"utilization", utilization_rate(counts)},
                             {"perplexity", perplexity(counts)}});
    }
    return nlohmann::json{{"per_stage", std::move(per_stage)},
                          {"bitrate_efficiency", bitrate_efficiency(counts_per_stage)}};
}

inline std::string stats_report_csv(const std::vector<std::vector<std::size_t>>& counts_per_stage) {
    std::string out = "stage,utilization,perplexity,bitrate_efficiency\n";
    double be = bitrate_efficiency(counts_per_stage);
    for (std::size_t m = 0; m < counts_per_stage.size(); ++m) {
        out += std::to_string(m + 1) + "," + format_double(utilization_rate(counts_per_stage[m])) +
               "," + format_double(perplexity(counts_per_stage[m])) + "," + format_double(be) +
               "\n";
    }
    return out;
}

/// JSON dump of every stage's codebook rows together with that stage's
/// pre-quantization feature rows (the residual each stage actually sees).
/// With an empty feature batch only the codebooks are written.
inline void export_embedding_dump(const RvqStack& stack, const Matrix& features,
                                  const std::filesystem::path& path) {
    stack.validate();
    const bool have_features = features.rows() > 0;
    if (have_features && features.cols() != stack.dim()) {
        throw std::invalid_argument("export_embedding_dump: feature dim != stack dim");
    }
    nlohmann::json stages = nlohmann::json::array();
    Matrix residual = features;
    for (const auto& st : stack.stages) {
        nlohmann::json entry;
        entry["codebook"] = matrix_to_json(st.codebook.vectors);
        entry["features"] = have_features ? matrix_to_json(residual) : nlohmann::json::array();
        stages.push_back(std::move(entry));
        if (have_features) {
            QuantizeOutput q = quantize(residual, st.codebook);
            for (std::size_t i = 0; i < residual.rows(); ++i) {
                for (std::size_t j = 0; j < residual.cols(); ++j) {
                    residual(i, j) -= q.quantized(i, j);
                }
            }
        }
    }
    nlohmann::json doc{{"stages", std::move(stages)}};
    atomic_write(path, doc.dump(2));
}

}  // namespace ervq
