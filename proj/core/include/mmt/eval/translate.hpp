#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/corpus/corpus.hpp"
#include "mmt/model/registry.hpp"

namespace mmt::eval {

enum class Strategy { Greedy, Beam };

struct DecodeConfig {
    Strategy strategy = Strategy::Beam;
    std::size_t beam_size = 4;
    std::size_t max_len = 64; // generated tokens, EOS included
    double length_penalty = 1.0;

    static DecodeConfig greedy() { return {Strategy::Greedy, 1, 64, 1.0}; }
    void validate() const;
};

/// Output ids without BOS, ending in EOS unless max_len cut it off.
/// Ties go to the lower token id.
std::vector<TokenId> greedy_decode(const model::Encoder& encoder, const model::Decoder& decoder,
                                   std::span<const TokenId> src_ids, std::size_t max_len);

/// Beam search over log-probabilities; a finished hypothesis scores
/// logprob / length^length_penalty. Only EOS candidates ranked inside the
/// beam finish, so beam size 1 reproduces greedy_decode.
std::vector<TokenId> beam_decode(const model::Encoder& encoder, const model::Decoder& decoder,
                                 std::span<const TokenId> src_ids, const DecodeConfig& config);

std::vector<TokenId> decode(const model::Encoder& encoder, const model::Decoder& decoder,
                            std::span<const TokenId> src_ids, const DecodeConfig& config);

/// Encodes with src's encoder and decodes with tgt's decoder, whether or not
/// the two were ever trained together. Both pairs need tokenizers.
std::string translate(const model::ModuleRegistry& registry, const LanguageId& src, const LanguageId& tgt,
                      std::string_view text, const DecodeConfig& config = {});

std::vector<std::string> translate_all(const model::ModuleRegistry& registry, const LanguageId& src,
                                       const LanguageId& tgt, std::span<const std::string> texts,
                                       const DecodeConfig& config = {});

enum class Condition { Initial, Added, ZeroShot };
std::string_view to_string(Condition c);
Condition parse_condition(std::string_view text);

struct EvalCell {
    Direction direction;
    Condition condition = Condition::Initial;
    double bleu = 0.0;
};

struct EvalMatrix {
    std::vector<EvalCell> cells;

    const EvalCell& at(const Direction& d) const;
    /// Header `src,tgt,condition,bleu`, one row per cell, bleu to 4 decimals.
    std::string to_csv() const;
    static EvalMatrix from_csv(std::string_view text);
    /// Aligned src x tgt grid; added cells marked '+', zero-shot '*'.
    std::string to_table() const;
};

struct ConditionedDirection {
    Direction direction;
    Condition condition;
};

/// All ordered pairs among `initial` tagged INITIAL; with a new language,
/// new<->anchor tagged ADDED and new<->every other initial language ZERO_SHOT.
std::vector<ConditionedDirection> standard_directions(std::span<const LanguageId> initial,
                                                      const LanguageId* new_lang = nullptr,
                                                      const LanguageId* anchor = nullptr);

/// Translates one split for each direction and scores corpus BLEU.
EvalMatrix evaluate_matrix(const model::ModuleRegistry& registry, const corpus::MultiParallelCorpus& corpus,
                           std::span<const ConditionedDirection> directions, const DecodeConfig& config = {},
                           corpus::Split split = corpus::Split::Test);

} // namespace mmt::eval
