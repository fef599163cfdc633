#include "mmt/tokenizer/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mmt::tok {

namespace {

const std::string kSpecialSymbols[kNumSpecials] = {"<pad>", "<s>", "</s>", "<unk>"};
constexpr std::string_view kHeaderTag = "#mmt-bpe";
constexpr int kFormatVersion = 1;

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Merges every left-to-right occurrence of (a, b) in place.
void apply_merge(std::vector<std::string>& symbols, const std::string& a, const std::string& b) {
    std::vector<std::string> out;
    out.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
            out.push_back(a + b);
            ++i;
        } else {
            out.push_back(std::move(symbols[i]));
        }
    }
    symbols = std::move(out);
}

} // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < text.size();) {
        std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
        out.emplace_back(text.substr(i, n));
        i += n;
    }
    return out;
}

std::vector<std::string_view> split_whitespace(std::string_view text) {
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) words.push_back(text.substr(i, j - i));
        i = j;
    }
    return words;
}

Tokenizer::Tokenizer(LanguageId lang, std::vector<std::string> alphabet, std::vector<MergePair> merges)
    : lang_(std::move(lang)), alphabet_(std::move(alphabet)), merges_(std::move(merges)) {
    std::sort(alphabet_.begin(), alphabet_.end());
    alphabet_.erase(std::unique(alphabet_.begin(), alphabet_.end()), alphabet_.end());
    for (const auto& s : kSpecialSymbols) symbols_.push_back(s);
    auto add = [this](const std::string& s) {
        if (ids_.emplace(s, static_cast<TokenId>(symbols_.size())).second) symbols_.push_back(s);
    };
    for (const auto& c : alphabet_) {
        if (c.empty() || is_space(c[0])) throw Error("tokenizer alphabet contains whitespace or empty symbol");
        add(c);
    }
    add(std::string(kEndOfWord));
    for (std::size_t r = 0; r < merges_.size(); ++r) {
        const auto& [a, b] = merges_[r];
        if (!ids_.contains(a) || !ids_.contains(b)) {
            throw Error("merge " + std::to_string(r) + " (" + a + " " + b + ") uses an unknown symbol");
        }
        merge_rank_.emplace(merges_[r], r);
        add(a + b);
    }
}

const std::string& Tokenizer::symbol(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
        throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(symbols_.size()) + " for " + lang_.str());
    }
    return symbols_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Tokenizer::id_of(std::string_view symbol) const {
    auto it = ids_.find(std::string(symbol));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> Tokenizer::segment_word(std::string_view word) const {
    auto symbols = utf8_chars(word);
    symbols.emplace_back(kEndOfWord);
    // lowest-rank pair first, which reproduces training order
    while (symbols.size() > 1) {
        std::size_t best = merge_rank_.size();
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = merge_rank_.find(MergePair{symbols[i], symbols[i + 1]});
            if (it != merge_rank_.end()) best = std::min(best, it->second);
        }
        if (best == merge_rank_.size()) break;
        apply_merge(symbols, merges_[best].first, merges_[best].second);
    }
    return symbols;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids{kBos};
    for (auto word : split_whitespace(text)) {
        for (const auto& s : segment_word(word)) {
            auto it = ids_.find(s);
            ids.push_back(it == ids_.end() ? kUnk : it->second);
        }
    }
    ids.push_back(kEos);
    return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        const auto& s = symbol(id);
        if (id == kEos) break;
        if (id == kPad || id == kBos) continue;
        if (id == kUnk) {
            out += s;
            continue;
        }
        if (s.size() >= kEndOfWord.size() && std::string_view(s).substr(s.size() - kEndOfWord.size()) == kEndOfWord) {
            out.append(s, 0, s.size() - kEndOfWord.size());
            out += ' ';
        } else {
            out += s;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string Tokenizer::serialize() const {
    std::ostringstream os;
    os << kHeaderTag << " version=" << kFormatVersion << " lang=" << lang_.str() << " alphabet=";
    for (const auto& c : alphabet_) os << c;
    os << '\n';
    for (const auto& [a, b] : merges_) os << a << ' ' << b << '\n';
    return os.str();
}

Tokenizer Tokenizer::parse(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string header;
    if (!std::getline(is, header) || header.rfind(kHeaderTag, 0) != 0) {
        throw Error("tokenizer file: missing '" + std::string(kHeaderTag) + "' header");
    }
    auto field = [&header](std::string_view key) -> std::string {
        const std::string needle = " " + std::string(key) + "=";
        auto pos = header.find(needle);
        if (pos == std::string::npos) throw Error("tokenizer file: header lacks '" + std::string(key) + "'");
        pos += needle.size();
        if (key == "alphabet") return header.substr(pos);
        return header.substr(pos, header.find(' ', pos) - pos);
    };
    if (field("version") != std::to_string(kFormatVersion)) {
        throw Error("tokenizer file: unsupported version " + field("version"));
    }
    LanguageId lang(field("lang"));
    std::vector<MergePair> merges;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto parts = split_whitespace(line);
        if (parts.size() != 2) throw Error("tokenizer file: line " + std::to_string(lineno) + " is not a merge pair");
        merges.emplace_back(std::string(parts[0]), std::string(parts[1]));
    }
    return Tokenizer(std::move(lang), utf8_chars(field("alphabet")), std::move(merges));
}

void Tokenizer::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write tokenizer file " + path.string());
    out << serialize();
    if (!out) throw Error("failed writing tokenizer file " + path.string());
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read tokenizer file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::uint64_t Tokenizer::hash() const { return fnv1a(serialize()); }

Tokenizer train_bpe(const LanguageId& lang, std::span<const std::string> corpus, std::size_t num_merges) {
    std::map<std::string, std::size_t> word_freq;
    for (const auto& line : corpus) {
        for (auto w : split_whitespace(line)) ++word_freq[std::string(w)];
    }
    if (word_freq.empty()) throw Error("train_bpe: corpus for " + lang.str() + " contains no words");

    std::set<std::string> alphabet;
    std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
    for (const auto& [w, n] : word_freq) {
        auto chars = utf8_chars(w);
        alphabet.insert(chars.begin(), chars.end());
        chars.emplace_back(kEndOfWord);
        words.emplace_back(std::move(chars), n);
    }

    std::vector<MergePair> merges;
    while (merges.size() < num_merges) {
        std::map<MergePair, std::size_t> counts;
        for (const auto& [symbols, n] : words) {
            for (std::size_t i = 0; i + 1 < symbols.size(); ++i) counts[{symbols[i], symbols[i + 1]}] += n;
        }
        if (counts.empty()) break;
        // std::map iterates pairs in lexicographic order, so the first maximum wins ties
        auto best = counts.begin();
        for (auto it = counts.begin(); it != counts.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        const MergePair chosen = best->first;
        for (auto& [symbols, n] : words) apply_merge(symbols, chosen.first, chosen.second);
        merges.push_back(chosen);
    }
    return Tokenizer(lang, std::vector<std::string>(alphabet.begin(), alphabet.end()), std::move(merges));
}

} // namespace mmt::tok
