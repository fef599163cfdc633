#include "mmt/corpus/batching.hpp"

#include <algorithm>
#include <numeric>

namespace mmt::corpus {

EncodedCorpus::EncodedCorpus(const MultiParallelCorpus& corpus,
                             const std::map<LanguageId, const tok::Tokenizer*>& tokenizers)
    : size_(corpus.size()) {
    for (const auto& [lang, tk] : tokenizers) {
        if (tk == nullptr) throw ContractError("EncodedCorpus: null tokenizer for " + lang.str());
        auto& col = ids_[lang];
        col.reserve(corpus.size());
        for (const auto& line : corpus.lines(lang)) col.push_back(tk->encode(line));
    }
    for (int s = 0; s < 3; ++s) splits_[s] = corpus.split(static_cast<Split>(s));
}

const std::vector<TokenId>& EncodedCorpus::ids(const LanguageId& lang, std::size_t record) const {
    auto it = ids_.find(lang);
    if (it == ids_.end()) throw Error("encoded corpus has no language '" + lang.str() + "'");
    return it->second.at(record);
}

Batch make_batch(const EncodedCorpus& corpus, const Direction& direction, std::span<const std::size_t> records) {
    std::vector<std::vector<TokenId>> src, tgt_in, tgt_out;
    for (auto r : records) {
        src.push_back(corpus.ids(direction.src, r));
        const auto& t = corpus.ids(direction.tgt, r);
        tgt_in.emplace_back(t.begin(), t.end() - 1);
        tgt_out.emplace_back(t.begin() + 1, t.end());
    }
    return Batch{direction, std::vector<std::size_t>(records.begin(), records.end()),
                 model::TokenBatch::from_sequences(src), model::TokenBatch::from_sequences(tgt_in),
                 model::TokenBatch::from_sequences(tgt_out)};
}

std::vector<Batch> make_batches(const EncodedCorpus& corpus, Split split, const Direction& direction,
                                std::size_t token_budget, std::uint64_t epoch_seed) {
    if (direction.src == direction.tgt) {
        throw Error("direction " + direction.str() + " would be autoencoding, which is excluded");
    }
    if (!corpus.has_language(direction.src) || !corpus.has_language(direction.tgt)) {
        throw Error("no encoded data for direction " + direction.str());
    }
    std::vector<std::size_t> recs = corpus.split(split);
    if (recs.empty()) throw Error("split " + std::string(to_string(split)) + " is empty");
    std::size_t longest = 0;
    for (auto r : recs) longest = std::max(longest, corpus.ids(direction.src, r).size());
    if (token_budget < longest) {
        throw Error("token budget " + std::to_string(token_budget) + " is below the longest source sentence (" +
                    std::to_string(longest) + " tokens)");
    }

    Rng rng(epoch_seed);
    rng.shuffle(recs);
    std::stable_sort(recs.begin(), recs.end(), [&](std::size_t a, std::size_t b) {
        return corpus.ids(direction.src, a).size() < corpus.ids(direction.src, b).size();
    });

    std::vector<std::vector<std::size_t>> groups;
    std::size_t used = 0;
    for (auto r : recs) {
        const std::size_t n = corpus.ids(direction.src, r).size();
        if (groups.empty() || used + n > token_budget) {
            groups.emplace_back();
            used = 0;
        }
        groups.back().push_back(r);
        used += n;
    }
    rng.shuffle(groups);

    std::vector<Batch> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(make_batch(corpus, direction, g));
    return out;
}

BatchStream::BatchStream(std::shared_ptr<const EncodedCorpus> corpus, Split split, Direction direction,
                         std::size_t token_budget, std::uint64_t seed)
    : corpus_(std::move(corpus)), split_(split), direction_(std::move(direction)), budget_(token_budget),
      seed_(seed) {
    if (!corpus_) throw ContractError("BatchStream: null corpus");
    batches_ = make_batches(*corpus_, split_, direction_, budget_, Rng::derived(seed_, direction_.str() + "#0").next());
}

const Batch& BatchStream::next() {
    if (started_ && pos_ == batches_.size()) {
        ++epoch_;
        batches_ = make_batches(*corpus_, split_, direction_, budget_,
                                Rng::derived(seed_, direction_.str() + "#" + std::to_string(epoch_)).next());
        pos_ = 0;
    }
    started_ = true;
    return batches_[pos_++];
}

} // namespace mmt::corpus
