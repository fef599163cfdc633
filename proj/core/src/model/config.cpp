#include "mmt/model/config.hpp"

#include "mmt/common.hpp"

namespace mmt::model {

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full_scale() {
    return ModelConfig{.num_layers = 6,
                       .num_heads = 8,
                       .d_model = 512,
                       .d_ff = 2048,
                       .dropout = 0.3,
                       .max_len = 256,
                       .vocab_size = 32000};
}

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* field) {
        if (v == 0) throw ContractError(std::string("ModelConfig.") + field + " must be positive");
    };
    positive(num_layers, "num_layers");
    positive(num_heads, "num_heads");
    positive(d_model, "d_model");
    positive(d_ff, "d_ff");
    positive(max_len, "max_len");
    positive(vocab_size, "vocab_size");
    if (d_model % num_heads != 0) throw ContractError("ModelConfig.d_model must be divisible by num_heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("ModelConfig.dropout must lie in [0, 1)");
}

std::string ModelConfig::first_difference(const ModelConfig& o) const {
    if (num_layers != o.num_layers) return "num_layers";
    if (num_heads != o.num_heads) return "num_heads";
    if (d_model != o.d_model) return "d_model";
    if (d_ff != o.d_ff) return "d_ff";
    if (dropout != o.dropout) return "dropout";
    if (max_len != o.max_len) return "max_len";
    if (vocab_size != o.vocab_size) return "vocab_size";
    return {};
}

} // namespace mmt::model
