#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>

namespace mmt::eval {

struct BleuStats {
    std::array<std::size_t, 4> matches{};
    std::array<std::size_t, 4> totals{};
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;

    /// 0-100. Zero when any n-gram order has no match (no smoothing).
    double score() const;
};

/// Corpus-level counts over whitespace tokens, clipped by reference counts.
BleuStats bleu_stats(std::span<const std::string> hypotheses, std::span<const std::string> references);

/// Corpus BLEU-4 with brevity penalty. Error on length mismatch or empty input.
double bleu(std::span<const std::string> hypotheses, std::span<const std::string> references);

} // namespace mmt::eval
