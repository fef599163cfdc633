#include "mmt/eval/translate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "mmt/eval/bleu.hpp"
#include "mmt/tokenizer/bpe.hpp"

namespace mmt::eval {
namespace {

std::size_t generation_limit(const model::Decoder& decoder, std::size_t requested) {
    // the prefix (BOS + generated tokens before the last) must fit max_len positions
    return std::min(requested, decoder.config().max_len);
}

// Log-softmax of the last position of each sequence, [batch x vocab].
std::vector<std::vector<double>> last_log_probs(const ad::Tensor& logits, std::size_t batch, std::size_t length) {
    const std::size_t vocab = logits.cols();
    auto data = logits.data();
    std::vector<std::vector<double>> out(batch, std::vector<double>(vocab));
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = data.data() + ((b + 1) * length - 1) * vocab;
        const double mx = *std::max_element(row, row + vocab);
        double z = 0.0;
        for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - mx);
        const double lz = mx + std::log(z);
        for (std::size_t c = 0; c < vocab; ++c) out[b][c] = row[c] - lz;
    }
    return out;
}

model::ContextualStates repeat_states(const model::ContextualStates& s, std::size_t times) {
    const std::size_t rows = s.length, cols = s.states.cols();
    auto data = s.states.data();
    std::vector<double> values;
    values.reserve(times * rows * cols);
    std::vector<std::uint8_t> mask;
    for (std::size_t t = 0; t < times; ++t) {
        values.insert(values.end(), data.begin(), data.end());
        mask.insert(mask.end(), s.mask.begin(), s.mask.end());
    }
    return {ad::Tensor::constant({times * rows, cols}, std::move(values)), times, s.length, std::move(mask)};
}

const tok::Tokenizer& tokenizer_of(const model::LanguageModulePair& p) {
    if (!p.tokenizer) throw Error("language " + p.lang.str() + " has no tokenizer attached");
    return *p.tokenizer;
}

} // namespace

void DecodeConfig::validate() const {
    if (beam_size == 0) throw ContractError("decode config: beam_size must be at least 1");
    if (max_len == 0) throw ContractError("decode config: max_len must be at least 1");
    if (!std::isfinite(length_penalty)) throw ContractError("decode config: length_penalty must be finite");
}

std::vector<TokenId> greedy_decode(const model::Encoder& encoder, const model::Decoder& decoder,
                                   std::span<const TokenId> src_ids, std::size_t max_len) {
    ad::NoGradGuard no_grad;
    const auto states = model::encode(encoder, model::TokenBatch::single(src_ids));
    std::vector<TokenId> prefix{tok::kBos};
    std::vector<TokenId> out;
    const std::size_t limit = generation_limit(decoder, max_len);
    while (out.size() < limit) {
        auto logits = model::decoder_logits(decoder, states, model::TokenBatch::single(prefix));
        const std::size_t vocab = logits.cols();
        auto data = logits.data();
        const double* row = data.data() + (prefix.size() - 1) * vocab;
        const auto best = static_cast<TokenId>(std::max_element(row, row + vocab) - row);
        out.push_back(best);
        if (best == tok::kEos) break;
        prefix.push_back(best);
    }
    return out;
}

std::vector<TokenId> beam_decode(const model::Encoder& encoder, const model::Decoder& decoder,
                                 std::span<const TokenId> src_ids, const DecodeConfig& config) {
    config.validate();
    ad::NoGradGuard no_grad;
    const auto states = model::encode(encoder, model::TokenBatch::single(src_ids));
    const std::size_t k = config.beam_size;
    const std::size_t limit = generation_limit(decoder, config.max_len);

    struct Hyp {
        std::vector<TokenId> tokens; // generated, no BOS
        double logp = 0.0;
    };
    struct Finished {
        std::vector<TokenId> tokens;
        double score;
    };
    auto normalized = [&](const Hyp& h) {
        return h.logp / std::pow(static_cast<double>(std::max<std::size_t>(1, h.tokens.size())),
                                 config.length_penalty);
    };

    std::vector<Hyp> alive{Hyp{}};
    std::vector<Finished> finished;
    for (std::size_t t = 0; t < limit && !alive.empty() && finished.size() < k; ++t) {
        std::vector<std::vector<TokenId>> prefixes;
        for (const auto& h : alive) {
            std::vector<TokenId> p{tok::kBos};
            p.insert(p.end(), h.tokens.begin(), h.tokens.end());
            prefixes.push_back(std::move(p));
        }
        const auto batch = model::TokenBatch::from_sequences(prefixes); // all the same length
        auto logits = model::decoder_logits(decoder, repeat_states(states, alive.size()), batch);
        const auto lp = last_log_probs(logits, alive.size(), batch.length);

        struct Cand {
            double logp;
            std::size_t hyp;
            TokenId token;
        };
        std::vector<Cand> cands;
        for (std::size_t h = 0; h < alive.size(); ++h) {
            for (std::size_t c = 0; c < lp[h].size(); ++c) {
                cands.push_back({alive[h].logp + lp[h][c], h, static_cast<TokenId>(c)});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.logp != b.logp) return a.logp > b.logp;
            if (a.hyp != b.hyp) return a.hyp < b.hyp;
            return a.token < b.token;
        });

        std::vector<Hyp> next;
        for (std::size_t rank = 0; rank < cands.size() && next.size() < k; ++rank) {
            const auto& c = cands[rank];
            Hyp h{alive[c.hyp].tokens, c.logp};
            h.tokens.push_back(c.token);
            if (c.token == tok::kEos) {
                if (rank < k) finished.push_back({h.tokens, normalized(h)});
                continue;
            }
            next.push_back(std::move(h));
        }
        alive = std::move(next);
    }
    if (finished.empty()) {
        for (const auto& h : alive) finished.push_back({h.tokens, normalized(h)});
    }
    // first best wins on ties
    const Finished* best = &finished.front();
    for (const auto& f : finished) {
        if (f.score > best->score) best = &f;
    }
    return best->tokens;
}

std::vector<TokenId> decode(const model::Encoder& encoder, const model::Decoder& decoder,
                            std::span<const TokenId> src_ids, const DecodeConfig& config) {
    config.validate();
    if (config.strategy == Strategy::Greedy) return greedy_decode(encoder, decoder, src_ids, config.max_len);
    return beam_decode(encoder, decoder, src_ids, config);
}

std::string translate(const model::ModuleRegistry& registry, const LanguageId& src, const LanguageId& tgt,
                      std::string_view text, const DecodeConfig& config) {
    std::string one(text);
    return translate_all(registry, src, tgt, std::span<const std::string>(&one, 1), config).front();
}

std::vector<std::string> translate_all(const model::ModuleRegistry& registry, const LanguageId& src,
                                       const LanguageId& tgt, std::span<const std::string> texts,
                                       const DecodeConfig& config) {
    if (src == tgt) throw Error("translate: source and target are both " + src.str());
    const auto& sp = registry.at(src);
    const auto& tp = registry.at(tgt);
    const auto& stok = tokenizer_of(sp);
    const auto& ttok = tokenizer_of(tp);
    std::vector<std::string> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        auto ids = stok.encode(text);
        if (ids.size() > sp.config.max_len) ids.resize(sp.config.max_len);
        out.push_back(ttok.decode(decode(sp.encoder, tp.decoder, ids, config)));
    }
    return out;
}

std::string_view to_string(Condition c) {
    switch (c) {
    case Condition::Initial:
        return "INITIAL";
    case Condition::Added:
        return "ADDED";
    case Condition::ZeroShot:
        return "ZERO_SHOT";
    }
    return "?";
}

Condition parse_condition(std::string_view text) {
    for (auto c : {Condition::Initial, Condition::Added, Condition::ZeroShot}) {
        if (to_string(c) == text) return c;
    }
    throw Error("unknown condition '" + std::string(text) + "'");
}

const EvalCell& EvalMatrix::at(const Direction& d) const {
    for (const auto& c : cells) {
        if (c.direction == d) return c;
    }
    throw Error("evaluation matrix has no cell for " + d.str());
}

std::string EvalMatrix::to_csv() const {
    std::string out = "src,tgt,condition,bleu\n";
    for (const auto& c : cells) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", c.bleu);
        out += c.direction.src.str() + "," + c.direction.tgt.str() + "," + std::string(to_string(c.condition)) +
               "," + buf + "\n";
    }
    return out;
}

EvalMatrix EvalMatrix::from_csv(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string line;
    if (!std::getline(is, line) || line != "src,tgt,condition,bleu") throw Error("evaluation CSV: bad header");
    EvalMatrix m;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
        if (f.size() != 4) throw Error("evaluation CSV: bad row '" + line + "'");
        m.cells.push_back({{LanguageId(f[0]), LanguageId(f[1])}, parse_condition(f[2]), std::stod(f[3])});
    }
    return m;
}

std::string EvalMatrix::to_table() const {
    std::vector<LanguageId> langs;
    auto add = [&](const LanguageId& l) {
        if (std::find(langs.begin(), langs.end(), l) == langs.end()) langs.push_back(l);
    };
    for (const auto& c : cells) {
        add(c.direction.src);
        add(c.direction.tgt);
    }
    std::ostringstream os;
    os << std::left << std::setw(8) << "src\\tgt";
    for (const auto& l : langs) os << std::right << std::setw(9) << l.str();
    os << "\n";
    for (const auto& s : langs) {
        os << std::left << std::setw(8) << s.str();
        for (const auto& t : langs) {
            std::string cell = "-";
            for (const auto& c : cells) {
                if (c.direction.src == s && c.direction.tgt == t) {
                    char buf[32];
                    const char* mark = c.condition == Condition::Added ? "+" : c.condition == Condition::ZeroShot ? "*" : " ";
                    std::snprintf(buf, sizeof buf, "%.2f%s", c.bleu, mark);
                    cell = buf;
                }
            }
            os << std::right << std::setw(9) << cell;
        }
        os << "\n";
    }
    os << "(+ added, * zero-shot)\n";
    return os.str();
}

std::vector<ConditionedDirection> standard_directions(std::span<const LanguageId> initial, const LanguageId* new_lang,
                                                      const LanguageId* anchor) {
    std::vector<ConditionedDirection> out;
    for (const auto& a : initial) {
        for (const auto& b : initial) {
            if (a != b) out.push_back({{a, b}, Condition::Initial});
        }
    }
    if (new_lang) {
        if (!anchor) throw ContractError("standard_directions: a new language needs an anchor");
        out.push_back({{*new_lang, *anchor}, Condition::Added});
        out.push_back({{*anchor, *new_lang}, Condition::Added});
        for (const auto& l : initial) {
            if (l == *anchor) continue;
            out.push_back({{*new_lang, l}, Condition::ZeroShot});
            out.push_back({{l, *new_lang}, Condition::ZeroShot});
        }
    }
    return out;
}

EvalMatrix evaluate_matrix(const model::ModuleRegistry& registry, const corpus::MultiParallelCorpus& corpus,
                           std::span<const ConditionedDirection> directions, const DecodeConfig& config,
                           corpus::Split split) {
    EvalMatrix m;
    for (const auto& cd : directions) {
        const auto& d = cd.direction;
        if (!corpus.has_language(d.src) || !corpus.has_language(d.tgt)) {
            throw Error("evaluation corpus has no column for direction " + d.str());
        }
        const auto src = corpus.split_lines(d.src, split);
        const auto ref = corpus.split_lines(d.tgt, split);
        const auto hyp = translate_all(registry, d.src, d.tgt, src, config);
        m.cells.push_back({d, cd.condition, bleu(hyp, ref)});
    }
    return m;
}

} // namespace mmt::eval
