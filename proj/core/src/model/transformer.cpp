#include "mmt/model/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "mmt/autodiff/ops.hpp"
#include "mmt/tokenizer/bpe.hpp"

namespace mmt::model {

namespace {

std::string last_component(const std::string& name) {
    auto pos = name.rfind('.');
    return pos == std::string::npos ? name : name.substr(pos + 1);
}

LayerNormParams make_norm(ParameterSet& ps, const std::string& prefix, std::size_t d, const ValueSource& src) {
    LayerNormParams ln;
    ln.gain = ps.add(prefix + ".gain", {d}, src(prefix + ".gain", {d}));
    ln.bias = ps.add(prefix + ".bias", {d}, src(prefix + ".bias", {d}));
    return ln;
}

Tensor make(ParameterSet& ps, const std::string& name, ad::Shape shape, const ValueSource& src) {
    auto values = src(name, shape);
    return ps.add(name, std::move(shape), std::move(values));
}

AttentionParams make_attention(ParameterSet& ps, const std::string& p, std::size_t d, const ValueSource& src) {
    AttentionParams a;
    a.wq = make(ps, p + ".wq", {d, d}, src);
    a.bq = make(ps, p + ".bq", {1, d}, src);
    a.wk = make(ps, p + ".wk", {d, d}, src);
    a.wv = make(ps, p + ".wv", {d, d}, src);
    a.bv = make(ps, p + ".bv", {1, d}, src);
    a.wo = make(ps, p + ".wo", {d, d}, src);
    a.bo = make(ps, p + ".bo", {1, d}, src);
    return a;
}

FeedForwardParams make_ffn(ParameterSet& ps, const std::string& p, std::size_t d, std::size_t ff,
                           const ValueSource& src) {
    FeedForwardParams f;
    f.w1 = make(ps, p + ".w1", {d, ff}, src);
    f.b1 = make(ps, p + ".b1", {1, ff}, src);
    f.w2 = make(ps, p + ".w2", {ff, d}, src);
    f.b2 = make(ps, p + ".b2", {1, d}, src);
    return f;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ad::add(ad::matmul(x, w), b); }

Tensor maybe_dropout(const Tensor& x, double p, const ForwardMode& mode) {
    if (!mode.training || p == 0.0) return x;
    if (mode.rng == nullptr) throw ContractError("training-mode forward with dropout needs an Rng");
    return ad::dropout(x, p, *mode.rng);
}

Tensor multi_head(const AttentionParams& a, const Tensor& query_in, const Tensor& kv_in,
                  const ad::AttentionLayout& layout) {
    auto q = linear(query_in, a.wq, a.bq);
    auto k = ad::matmul(kv_in, a.wk);
    auto v = linear(kv_in, a.wv, a.bv);
    return linear(ad::attention(q, k, v, layout), a.wo, a.bo);
}

Tensor feed_forward(const FeedForwardParams& f, const Tensor& x, double p, const ForwardMode& mode) {
    auto h = ad::relu(linear(x, f.w1, f.b1));
    return linear(maybe_dropout(h, p, mode), f.w2, f.b2);
}

Tensor norm(const LayerNormParams& ln, const Tensor& x) { return ad::layer_norm(x, ln.gain, ln.bias); }

// Scaled token embeddings plus sinusoidal positions.
Tensor embed_tokens(const Tensor& table, const TokenBatch& batch, const ModelConfig& cfg) {
    if (batch.batch == 0 || batch.length == 0) throw Error("cannot embed an empty sequence");
    if (batch.ids.size() != batch.batch * batch.length || batch.mask.size() != batch.ids.size()) {
        throw ContractError("token batch ids/mask sizes disagree with its shape");
    }
    if (batch.length > cfg.max_len) {
        throw Error("sequence length " + std::to_string(batch.length) + " exceeds max_len " +
                    std::to_string(cfg.max_len));
    }
    for (TokenId id : batch.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw Error("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(cfg.vocab_size));
        }
    }
    const std::size_t d = cfg.d_model;
    auto pe = positional_encoding(batch.length, d);
    std::vector<double> tiled(batch.batch * batch.length * d);
    for (std::size_t b = 0; b < batch.batch; ++b) std::copy(pe.begin(), pe.end(), tiled.begin() + b * pe.size());
    // Unscaled: with embeddings initialized at std d^-0.5 the position signal
    // dominates early on, which the word-order tasks depend on.
    return ad::add(ad::embedding(table, batch.ids), Tensor::constant({batch.batch * batch.length, d}, std::move(tiled)));
}

void build_encoder(const ModelConfig& c, const ValueSource& src, ParameterSet& ps, Tensor& embed,
                   std::vector<EncoderLayer>& layers, LayerNormParams& final_norm) {
    c.validate();
    embed = make(ps, "encoder.embed", {c.vocab_size, c.d_model}, src);
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        const std::string p = "encoder.layers." + std::to_string(l);
        EncoderLayer layer;
        layer.ln_attn = make_norm(ps, p + ".ln_attn", c.d_model, src);
        layer.self_attn = make_attention(ps, p + ".self_attn", c.d_model, src);
        layer.ln_ffn = make_norm(ps, p + ".ln_ffn", c.d_model, src);
        layer.ffn = make_ffn(ps, p + ".ffn", c.d_model, c.d_ff, src);
        layers.push_back(std::move(layer));
    }
    final_norm = make_norm(ps, "encoder.final_norm", c.d_model, src);
}

void build_decoder(const ModelConfig& c, const ValueSource& src, ParameterSet& ps, Decoder& dec) {
    c.validate();
    dec.embed = make(ps, "decoder.embed", {c.vocab_size, c.d_model}, src);
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        const std::string p = "decoder.layers." + std::to_string(l);
        DecoderLayer layer;
        layer.ln_self = make_norm(ps, p + ".ln_self", c.d_model, src);
        layer.self_attn = make_attention(ps, p + ".self_attn", c.d_model, src);
        layer.ln_cross = make_norm(ps, p + ".ln_cross", c.d_model, src);
        layer.cross_attn = make_attention(ps, p + ".cross_attn", c.d_model, src);
        layer.ln_ffn = make_norm(ps, p + ".ln_ffn", c.d_model, src);
        layer.ffn = make_ffn(ps, p + ".ffn", c.d_model, c.d_ff, src);
        dec.layers.push_back(std::move(layer));
    }
    dec.final_norm = make_norm(ps, "decoder.final_norm", c.d_model, src);
    dec.out_w = make(ps, "decoder.out_w", {c.d_model, c.vocab_size}, src);
    dec.out_b = make(ps, "decoder.out_b", {1, c.vocab_size}, src);
}

ValueSource copy_from(const ParameterSet& ps) {
    return [&ps](const std::string& name, const ad::Shape& shape) {
        for (const auto& [n, t] : ps.entries()) {
            if (n == name) {
                if (t.shape() != shape) throw Error("parameter " + name + " has shape " + ad::shape_string(t.shape()));
                return t.values();
            }
        }
        throw Error("no parameter named " + name);
    };
}

} // namespace

Tensor& ParameterSet::add(std::string name, ad::Shape shape, std::vector<double> values) {
    entries_.emplace_back(std::move(name), Tensor::parameter(std::move(shape), std::move(values)));
    return entries_.back().second;
}

std::vector<Tensor> ParameterSet::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
}

std::size_t ParameterSet::num_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
}

void ParameterSet::set_trainable(bool trainable) {
    for (auto& e : entries_) e.second.set_trainable(trainable);
}

std::vector<std::uint64_t> ParameterSet::hashes() const {
    std::vector<std::uint64_t> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(hash_values(e.second.values()));
    return out;
}

ValueSource random_init(Rng& rng, const ModelConfig& config) {
    return [&rng, d = config.d_model](const std::string& name, const ad::Shape& shape) {
        const std::size_t n = ad::shape_numel(shape);
        const std::string leaf = last_component(name);
        std::vector<double> v(n, 0.0);
        if (leaf == "gain") {
            std::fill(v.begin(), v.end(), 1.0);
        } else if (leaf == "embed") {
            // unit variance after the sqrt(d) scale in embed_tokens
            const double a = std::sqrt(3.0 / static_cast<double>(d));
            for (auto& x : v) x = rng.uniform(-a, a);
        } else if (leaf.front() != 'b' && !leaf.ends_with("_b")) {
            const double a = std::sqrt(6.0 / static_cast<double>(shape.front() + shape.back()));
            for (auto& x : v) x = rng.uniform(-a, a);
        }
        return v;
    };
}

Encoder::Encoder(const ModelConfig& config, Rng& rng) : Encoder(config, random_init(rng, config)) {}

Encoder::Encoder(const ModelConfig& config, const ValueSource& values) : config_(config) {
    build_encoder(config_, values, params_, embed, layers, final_norm);
}

Encoder Encoder::clone() const { return Encoder(config_, copy_from(params_)); }

Decoder::Decoder(const ModelConfig& config, Rng& rng) : Decoder(config, random_init(rng, config)) {}

Decoder::Decoder(const ModelConfig& config, const ValueSource& values) : config_(config) {
    build_decoder(config_, values, params_, *this);
}

Decoder Decoder::clone() const { return Decoder(config_, copy_from(params_)); }

TokenBatch TokenBatch::from_sequences(std::span<const std::vector<TokenId>> sequences) {
    TokenBatch b;
    b.batch = sequences.size();
    for (const auto& s : sequences) b.length = std::max(b.length, s.size());
    b.ids.assign(b.batch * b.length, tok::kPad);
    b.mask.assign(b.batch * b.length, 0);
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        std::copy(sequences[i].begin(), sequences[i].end(), b.ids.begin() + i * b.length);
        std::fill_n(b.mask.begin() + i * b.length, sequences[i].size(), 1);
    }
    return b;
}

TokenBatch TokenBatch::single(std::span<const TokenId> ids) {
    std::vector<std::vector<TokenId>> one{std::vector<TokenId>(ids.begin(), ids.end())};
    return from_sequences(one);
}

std::size_t TokenBatch::real_tokens() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

std::vector<double> positional_encoding(std::size_t length, std::size_t d_model) {
    std::vector<double> pe(length * d_model);
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t i = 0; i < d_model; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) * freq;
            pe[pos * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

ContextualStates encode(const Encoder& encoder, const TokenBatch& src, ForwardMode mode) {
    const auto& c = encoder.config();
    auto x = maybe_dropout(embed_tokens(encoder.embed, src, c), c.dropout, mode);
    ad::AttentionLayout layout{
        .heads = c.num_heads, .batch = src.batch, .query_len = src.length, .key_len = src.length, .key_mask = src.mask};
    for (const auto& layer : encoder.layers) {
        auto h = norm(layer.ln_attn, x);
        x = ad::add(x, maybe_dropout(multi_head(layer.self_attn, h, h, layout), c.dropout, mode));
        h = norm(layer.ln_ffn, x);
        x = ad::add(x, maybe_dropout(feed_forward(layer.ffn, h, c.dropout, mode), c.dropout, mode));
    }
    return ContextualStates{norm(encoder.final_norm, x), src.batch, src.length, src.mask};
}

Tensor decoder_logits(const Decoder& decoder, const ContextualStates& states, const TokenBatch& prefix,
                      ForwardMode mode) {
    const auto& c = decoder.config();
    if (!states.states.defined() || states.states.cols() != c.d_model) {
        throw Error("decoder_logits: encoder states have d_model " +
                    std::to_string(states.states.defined() ? states.states.cols() : 0) + ", decoder expects " +
                    std::to_string(c.d_model));
    }
    if (states.batch != prefix.batch) throw ContractError("decoder_logits: source and target batch sizes differ");
    auto x = maybe_dropout(embed_tokens(decoder.embed, prefix, c), c.dropout, mode);
    ad::AttentionLayout self_layout{.heads = c.num_heads,
                                    .batch = prefix.batch,
                                    .query_len = prefix.length,
                                    .key_len = prefix.length,
                                    .key_mask = prefix.mask,
                                    .causal = true};
    ad::AttentionLayout cross_layout{.heads = c.num_heads,
                                     .batch = prefix.batch,
                                     .query_len = prefix.length,
                                     .key_len = states.length,
                                     .key_mask = states.mask};
    for (const auto& layer : decoder.layers) {
        auto h = norm(layer.ln_self, x);
        x = ad::add(x, maybe_dropout(multi_head(layer.self_attn, h, h, self_layout), c.dropout, mode));
        h = norm(layer.ln_cross, x);
        x = ad::add(x, maybe_dropout(multi_head(layer.cross_attn, h, states.states, cross_layout), c.dropout, mode));
        h = norm(layer.ln_ffn, x);
        x = ad::add(x, maybe_dropout(feed_forward(layer.ffn, h, c.dropout, mode), c.dropout, mode));
    }
    return linear(norm(decoder.final_norm, x), decoder.out_w, decoder.out_b);
}

Tensor mean_pool(const ContextualStates& states) { return ad::masked_mean(states.states, states.mask, states.batch); }

} // namespace mmt::model
