#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmt/autodiff/tensor.hpp"
#include "mmt/common.hpp"
#include "mmt/model/config.hpp"

namespace mmt::model {

using ad::Tensor;

/// Ordered, named parameter arrays of one module.
class ParameterSet {
  public:
    Tensor& add(std::string name, ad::Shape shape, std::vector<double> values);

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<Tensor> tensors() const;
    std::size_t size() const { return entries_.size(); }
    std::size_t num_values() const;

    void set_trainable(bool trainable);

    /// Per-array content hashes, in registration order.
    std::vector<std::uint64_t> hashes() const;

  private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Supplies the initial values of a named parameter array.
using ValueSource = std::function<std::vector<double>(const std::string& name, const ad::Shape& shape)>;

/// Scaled-uniform (Glorot) weights, zero biases, unit norm gains.
ValueSource random_init(Rng& rng, const ModelConfig& config);

struct LayerNormParams {
    Tensor gain, bias;
};

struct AttentionParams {
    // No key bias: it shifts every score of a query equally and softmax ignores it.
    Tensor wq, bq, wk, wv, bv, wo, bo;
};

struct FeedForwardParams {
    Tensor w1, b1, w2, b2;
};

struct EncoderLayer {
    LayerNormParams ln_attn;
    AttentionParams self_attn;
    LayerNormParams ln_ffn;
    FeedForwardParams ffn;
};

struct DecoderLayer {
    LayerNormParams ln_self;
    AttentionParams self_attn;
    LayerNormParams ln_cross;
    AttentionParams cross_attn;
    LayerNormParams ln_ffn;
    FeedForwardParams ffn;
};

/// Pre-norm Transformer encoder with its own embedding table.
class Encoder {
  public:
    Encoder(const ModelConfig& config, Rng& rng);
    Encoder(const ModelConfig& config, const ValueSource& values);
    Encoder(Encoder&&) = default;
    Encoder& operator=(Encoder&&) = default;
    Encoder(const Encoder&) = delete;
    Encoder& operator=(const Encoder&) = delete;

    /// Deep copy; the clone shares no storage with this encoder.
    Encoder clone() const;

    const ModelConfig& config() const { return config_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    Tensor embed;
    std::vector<EncoderLayer> layers;
    LayerNormParams final_norm;

  private:
    ModelConfig config_;
    ParameterSet params_;
};

/// Pre-norm Transformer decoder: causal self-attention, its own
/// cross-attention over any encoder's states, untied output projection.
class Decoder {
  public:
    Decoder(const ModelConfig& config, Rng& rng);
    Decoder(const ModelConfig& config, const ValueSource& values);
    Decoder(Decoder&&) = default;
    Decoder& operator=(Decoder&&) = default;
    Decoder(const Decoder&) = delete;
    Decoder& operator=(const Decoder&) = delete;

    Decoder clone() const;

    const ModelConfig& config() const { return config_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

    Tensor embed;
    std::vector<DecoderLayer> layers;
    LayerNormParams final_norm;
    Tensor out_w, out_b;

  private:
    ModelConfig config_;
    ParameterSet params_;
};

/// Padded batch of token sequences, row-major [batch x length].
struct TokenBatch {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> mask; // 1 = real token
    std::size_t batch = 0;
    std::size_t length = 0;

    /// Right-pads every sequence with PAD to the longest length.
    static TokenBatch from_sequences(std::span<const std::vector<TokenId>> sequences);
    static TokenBatch single(std::span<const TokenId> ids);
    std::size_t real_tokens() const;
};

struct ContextualStates {
    Tensor states; // [batch*length x d_model]
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<std::uint8_t> mask;
};

struct ForwardMode {
    bool training = false;
    Rng* rng = nullptr; // dropout source, required when training with dropout > 0

    static ForwardMode eval() { return {}; }
};

ContextualStates encode(const Encoder& encoder, const TokenBatch& src, ForwardMode mode = {});

/// Teacher-forced logits over the decoder's vocabulary, [batch*length x vocab].
/// Position t sees prefix tokens <= t and the full source states.
Tensor decoder_logits(const Decoder& decoder, const ContextualStates& states, const TokenBatch& prefix,
                      ForwardMode mode = {});

/// Mean over non-pad positions, one row per sequence ([batch x d_model]).
Tensor mean_pool(const ContextualStates& states);

/// Sinusoidal position table, [length x d_model].
std::vector<double> positional_encoding(std::size_t length, std::size_t d_model);

} // namespace mmt::model
