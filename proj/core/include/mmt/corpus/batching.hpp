#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "mmt/corpus/corpus.hpp"
#include "mmt/model/transformer.hpp"
#include "mmt/tokenizer/bpe.hpp"

namespace mmt::corpus {

/// Token ids (BOS ... EOS) of every record in every language.
class EncodedCorpus {
  public:
    EncodedCorpus(const MultiParallelCorpus& corpus, const std::map<LanguageId, const tok::Tokenizer*>& tokenizers);

    bool has_language(const LanguageId& lang) const { return ids_.contains(lang); }
    const std::vector<TokenId>& ids(const LanguageId& lang, std::size_t record) const;
    const std::vector<std::size_t>& split(Split s) const { return splits_[static_cast<int>(s)]; }
    std::size_t size() const { return size_; }

  private:
    std::map<LanguageId, std::vector<std::vector<TokenId>>> ids_;
    std::vector<std::size_t> splits_[3];
    std::size_t size_ = 0;
};

struct Batch {
    Direction direction;
    std::vector<std::size_t> records;
    model::TokenBatch src;     // BOS x EOS
    model::TokenBatch tgt_in;  // BOS y
    model::TokenBatch tgt_out; // y EOS, PAD where tgt_in is padded
};

/// Assembles a batch for the given records without any budget check.
Batch make_batch(const EncodedCorpus& corpus, const Direction& direction, std::span<const std::size_t> records);

/// One epoch over a split: records are shuffled, sorted by source length
/// (stable, so equal lengths keep the shuffled order), packed greedily while
/// the non-pad source tokens stay within budget, and the batches shuffled.
/// Every record of the split appears in exactly one batch.
std::vector<Batch> make_batches(const EncodedCorpus& corpus, Split split, const Direction& direction,
                                std::size_t token_budget, std::uint64_t epoch_seed);

/// Endless batch source for one direction; reshuffles at each epoch.
class BatchStream {
  public:
    BatchStream(std::shared_ptr<const EncodedCorpus> corpus, Split split, Direction direction,
                std::size_t token_budget, std::uint64_t seed);

    const Batch& next();
    /// Completed passes over the split.
    std::size_t epoch() const { return epoch_; }
    const Direction& direction() const { return direction_; }

  private:
    std::shared_ptr<const EncodedCorpus> corpus_;
    Split split_;
    Direction direction_;
    std::size_t budget_;
    std::uint64_t seed_;
    std::vector<Batch> batches_;
    std::size_t pos_ = 0;
    std::size_t epoch_ = 0;
    bool started_ = false;
};

} // namespace mmt::corpus
