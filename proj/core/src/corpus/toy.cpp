#include "mmt/corpus/toy.hpp"

#include <algorithm>
#include <set>

#include "mmt/tokenizer/bpe.hpp"

namespace mmt::corpus {

std::string_view to_string(OrderRule rule) {
    switch (rule) {
    case OrderRule::Identity:
        return "identity";
    case OrderRule::Reversal:
        return "reversal";
    case OrderRule::RotateByOne:
        return "rotate";
    case OrderRule::SwapPairs:
        return "swap-pairs";
    }
    return "?";
}

OrderRule parse_order_rule(std::string_view name) {
    for (auto r : {OrderRule::Identity, OrderRule::Reversal, OrderRule::RotateByOne, OrderRule::SwapPairs}) {
        if (to_string(r) == name) return r;
    }
    throw Error("unknown order rule '" + std::string(name) + "'");
}

std::vector<int> apply_order(OrderRule rule, std::span<const int> pivot) {
    std::vector<int> out(pivot.begin(), pivot.end());
    switch (rule) {
    case OrderRule::Identity:
        break;
    case OrderRule::Reversal:
        std::reverse(out.begin(), out.end());
        break;
    case OrderRule::RotateByOne:
        if (!out.empty()) std::rotate(out.begin(), out.begin() + 1, out.end());
        break;
    case OrderRule::SwapPairs:
        for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
        break;
    }
    return out;
}

std::vector<int> invert_order(OrderRule rule, std::span<const int> surface) {
    std::vector<int> out(surface.begin(), surface.end());
    if (rule == OrderRule::RotateByOne) {
        if (!out.empty()) std::rotate(out.begin(), out.end() - 1, out.end());
        return out;
    }
    // identity, reversal and pair swaps are involutions
    return apply_order(rule, surface);
}

void ToyLanguageSpec::validate() const {
    if (lang.empty()) throw Error("toy language has an empty id");
    if (lexicon.empty()) throw Error("toy language " + lang.str() + " has an empty lexicon");
    std::set<std::string> seen;
    for (const auto& w : lexicon) {
        if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos) {
            throw Error("toy language " + lang.str() + ": lexicon word '" + w + "' is empty or contains whitespace");
        }
        if (!seen.insert(w).second) {
            throw Error("toy language " + lang.str() + ": lexicon is not a bijection, '" + w + "' is used twice");
        }
    }
}

std::string ToyLanguageSpec::render(std::span<const int> pivot) const {
    std::string out;
    for (int s : apply_order(order, pivot)) {
        if (s < 0 || static_cast<std::size_t>(s) >= lexicon.size()) {
            throw ContractError("pivot symbol " + std::to_string(s) + " outside the lexicon");
        }
        if (!out.empty()) out += ' ';
        out += lexicon[static_cast<std::size_t>(s)];
    }
    return out;
}

std::vector<int> ToyLanguageSpec::parse(std::string_view line) const {
    std::vector<int> surface;
    for (auto w : tok::split_whitespace(line)) {
        auto it = std::find(lexicon.begin(), lexicon.end(), w);
        if (it == lexicon.end()) throw Error(lang.str() + ": unknown word '" + std::string(w) + "'");
        surface.push_back(static_cast<int>(it - lexicon.begin()));
    }
    return invert_order(order, surface);
}

std::vector<ToyLanguageDef> default_toy_languages() {
    return {{"de", OrderRule::Reversal},
            {"en", OrderRule::Identity},
            {"es", OrderRule::RotateByOne},
            {"fr", OrderRule::SwapPairs},
            {"ru", OrderRule::Reversal}};
}

std::vector<ToyLanguageSpec> make_toy_specs(std::span<const ToyLanguageDef> defs, std::uint64_t seed,
                                            std::size_t alphabet) {
    static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
    static constexpr std::string_view kVowels = "aeiou";
    if (alphabet == 0) throw ContractError("make_toy_specs: empty pivot alphabet");
    Rng rng = Rng::derived(seed, "toy-lexicons");
    std::set<std::string> used;
    std::vector<ToyLanguageSpec> out;
    for (const auto& d : defs) {
        ToyLanguageSpec spec{LanguageId(d.lang), {}, d.order};
        while (spec.lexicon.size() < alphabet) {
            std::string word;
            const std::size_t syllables = 2 + rng.below(2);
            for (std::size_t s = 0; s < syllables; ++s) {
                word += kConsonants[rng.below(kConsonants.size())];
                word += kVowels[rng.below(kVowels.size())];
            }
            if (used.insert(word).second) spec.lexicon.push_back(std::move(word));
        }
        spec.validate();
        out.push_back(std::move(spec));
    }
    return out;
}

ToyCorpus generate_toy_corpus(std::span<const ToyLanguageSpec> specs, std::size_t n_sentences, std::size_t min_len,
                              std::size_t max_len, std::uint64_t seed) {
    if (specs.size() < 2) throw ContractError("generate_toy_corpus: need at least two languages");
    if (n_sentences == 0) throw ContractError("generate_toy_corpus: n_sentences must be positive");
    if (min_len == 0 || min_len > max_len) throw ContractError("generate_toy_corpus: bad length range");
    const std::size_t alphabet = specs.front().lexicon.size();
    std::vector<LanguageId> langs;
    for (const auto& s : specs) {
        s.validate();
        if (s.lexicon.size() != alphabet) throw Error("toy languages disagree on the pivot alphabet size");
        langs.push_back(s.lang);
    }

    Rng rng = Rng::derived(seed, "toy-corpus");
    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> pivots;
    std::size_t attempts = 0;
    while (pivots.size() < n_sentences) {
        if (++attempts > 100 * n_sentences + 1000) {
            throw Error("generate_toy_corpus: cannot find " + std::to_string(n_sentences) + " distinct sentences");
        }
        std::vector<int> p(min_len + rng.below(max_len - min_len + 1));
        for (auto& s : p) s = static_cast<int>(rng.below(alphabet));
        if (seen.insert(p).second) pivots.push_back(std::move(p));
    }

    std::vector<std::size_t> order(n_sentences);
    for (std::size_t i = 0; i < n_sentences; ++i) order[i] = i;
    rng.shuffle(order);
    const auto n_small = static_cast<std::size_t>(static_cast<double>(n_sentences) * 0.05 + 0.5);
    std::vector<Split> split_of(n_sentences, Split::Train);
    for (std::size_t i = 0; i < n_small && i < n_sentences; ++i) split_of[order[i]] = Split::Valid;
    for (std::size_t i = n_small; i < 2 * n_small && i < n_sentences; ++i) split_of[order[i]] = Split::Test;

    ToyCorpus out{MultiParallelCorpus(langs), {}};
    for (std::size_t i = 0; i < n_sentences; ++i) {
        std::vector<std::string> rec;
        for (const auto& s : specs) rec.push_back(s.render(pivots[i]));
        out.corpus.add_record(std::move(rec), split_of[i]);
    }
    out.pivots = std::move(pivots);
    return out;
}

} // namespace mmt::corpus
