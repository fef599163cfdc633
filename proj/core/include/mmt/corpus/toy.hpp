#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/corpus/corpus.hpp"

namespace mmt::corpus {

/// Word-order rule of a toy language, applied to the pivot symbol sequence.
enum class OrderRule {
    Identity,
    Reversal,
    RotateByOne, // first symbol moves to the end
    SwapPairs,   // (0 1)(2 3)...; an odd last symbol stays
};

std::string_view to_string(OrderRule rule);
OrderRule parse_order_rule(std::string_view name);

std::vector<int> apply_order(OrderRule rule, std::span<const int> pivot);
std::vector<int> invert_order(OrderRule rule, std::span<const int> surface);

/// A toy language: a bijective lexicon from pivot symbols to surface words
/// plus an order rule.
struct ToyLanguageSpec {
    LanguageId lang;
    std::vector<std::string> lexicon; // lexicon[symbol] = word
    OrderRule order = OrderRule::Identity;

    /// Error unless the lexicon is a bijection onto non-empty, space-free words.
    void validate() const;

    std::string render(std::span<const int> pivot) const;
    /// Inverse of render; Error on unknown words.
    std::vector<int> parse(std::string_view line) const;
};

inline constexpr std::size_t kPivotAlphabet = 40;
inline constexpr std::size_t kMinLength = 3;
inline constexpr std::size_t kMaxLength = 12;

/// The default toy family: de (reversal), en (identity), es (rotate-by-1),
/// fr (swap-pairs), plus ru (reversal) held back for the adding condition.
struct ToyLanguageDef {
    std::string lang;
    OrderRule order;
};
std::vector<ToyLanguageDef> default_toy_languages();

/// Random consonant-vowel lexicons, unique across all the returned languages.
std::vector<ToyLanguageSpec> make_toy_specs(std::span<const ToyLanguageDef> defs, std::uint64_t seed,
                                            std::size_t alphabet = kPivotAlphabet);

struct ToyCorpus {
    MultiParallelCorpus corpus;
    std::vector<std::vector<int>> pivots; // per record
};

/// Samples distinct pivot sentences with lengths uniform in [min_len, max_len]
/// and renders each through every spec. Split 90/5/5 after a seeded shuffle.
ToyCorpus generate_toy_corpus(std::span<const ToyLanguageSpec> specs, std::size_t n_sentences, std::size_t min_len,
                              std::size_t max_len, std::uint64_t seed);

} // namespace mmt::corpus
