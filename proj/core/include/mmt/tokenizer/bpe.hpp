#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmt/common.hpp"

namespace mmt::tok {

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumSpecials = 4;

/// Appended to every word before merging, so merges never cross word boundaries.
inline constexpr std::string_view kEndOfWord = "</w>";

using MergePair = std::pair<std::string, std::string>;

/// Byte-pair-encoding vocabulary for a single language.
///
/// Ids: 0-3 are PAD, BOS, EOS, UNK; then the alphabet in byte order; then the
/// end-of-word marker; then one id per merge result in training order.
/// A Tokenizer is immutable once built.
class Tokenizer {
  public:
    Tokenizer(LanguageId lang, std::vector<std::string> alphabet, std::vector<MergePair> merges);

    const LanguageId& lang() const { return lang_; }
    std::size_t vocab_size() const { return symbols_.size(); }
    const std::vector<MergePair>& merges() const { return merges_; }
    const std::vector<std::string>& alphabet() const { return alphabet_; }

    const std::string& symbol(TokenId id) const;
    std::optional<TokenId> id_of(std::string_view symbol) const;

    /// BOS, subword ids, EOS. Characters outside the alphabet become UNK.
    std::vector<TokenId> encode(std::string_view text) const;

    /// Inverse of encode on UNK-free, single-space-separated text. PAD and BOS
    /// are skipped and decoding stops at the first EOS.
    std::string decode(std::span<const TokenId> ids) const;

    std::string serialize() const;
    static Tokenizer parse(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Tokenizer load(const std::filesystem::path& path);

    /// Content hash of the serialized form; recorded in checkpoints.
    std::uint64_t hash() const;

  private:
    std::vector<std::string> segment_word(std::string_view word) const;

    LanguageId lang_;
    std::vector<std::string> alphabet_;
    std::vector<MergePair> merges_;
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, TokenId> ids_;
    std::map<MergePair, std::size_t> merge_rank_;
};

/// Learns `num_merges` greedy highest-frequency merges from whitespace-split
/// words (ties: lexicographically smallest pair). Stops early if no adjacent
/// pair remains. Throws Error on a corpus without words.
Tokenizer train_bpe(const LanguageId& lang, std::span<const std::string> corpus, std::size_t num_merges);

/// Splits UTF-8 text into code points (invalid bytes become single-byte units).
std::vector<std::string> utf8_chars(std::string_view text);

std::vector<std::string_view> split_whitespace(std::string_view text);

} // namespace mmt::tok
