#pragma once

#include <cstddef>
#include <string>

namespace mmt::model {

/// Shape of one language's encoder/decoder pair.
struct ModelConfig {
    std::size_t num_layers = 2;
    std::size_t num_heads = 4;
    std::size_t d_model = 64;
    std::size_t d_ff = 128;
    double dropout = 0.1;
    std::size_t max_len = 64;
    std::size_t vocab_size = 0;

    /// Small model used for tests and CPU-scale experiments.
    static ModelConfig desk();
    /// 6 layers, 8 heads, 512-wide embeddings, dropout 0.3, 32k vocabulary.
    static ModelConfig full_scale();

    /// Throws ContractError naming the offending field.
    void validate() const;

    /// Empty when equal, else the name of the first differing field.
    std::string first_difference(const ModelConfig& other) const;

    bool operator==(const ModelConfig&) const = default;
};

} // namespace mmt::model
