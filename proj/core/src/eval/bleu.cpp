#include "mmt/eval/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "mmt/common.hpp"
#include "mmt/tokenizer/bpe.hpp"

namespace mmt::eval {

double BleuStats::score() const {
    if (hyp_length == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        if (matches[n] == 0 || totals[n] == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
    }
    const double bp = hyp_length >= ref_length
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length));
    return 100.0 * bp * std::exp(log_sum / 4.0);
}

BleuStats bleu_stats(std::span<const std::string> hypotheses, std::span<const std::string> references) {
    if (hypotheses.size() != references.size()) {
        throw Error("bleu: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                    std::to_string(references.size()) + " references");
    }
    if (hypotheses.empty()) throw Error("bleu: empty corpus");
    BleuStats s;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto hyp = tok::split_whitespace(hypotheses[i]);
        const auto ref = tok::split_whitespace(references[i]);
        s.hyp_length += hyp.size();
        s.ref_length += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            std::map<std::vector<std::string_view>, std::size_t> ref_counts;
            for (std::size_t k = 0; k + n <= ref.size(); ++k) {
                ++ref_counts[{ref.begin() + static_cast<std::ptrdiff_t>(k),
                              ref.begin() + static_cast<std::ptrdiff_t>(k + n)}];
            }
            std::map<std::vector<std::string_view>, std::size_t> hyp_counts;
            for (std::size_t k = 0; k + n <= hyp.size(); ++k) {
                ++hyp_counts[{hyp.begin() + static_cast<std::ptrdiff_t>(k),
                              hyp.begin() + static_cast<std::ptrdiff_t>(k + n)}];
            }
            for (const auto& [gram, count] : hyp_counts) {
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) s.matches[n - 1] += std::min(count, it->second);
                s.totals[n - 1] += count;
            }
        }
    }
    return s;
}

double bleu(std::span<const std::string> hypotheses, std::span<const std::string> references) {
    return bleu_stats(hypotheses, references).score();
}

} // namespace mmt::eval
