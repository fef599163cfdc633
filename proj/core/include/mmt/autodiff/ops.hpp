#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmt/autodiff/tensor.hpp"

namespace mmt::ad {

// All ops view a tensor as a row-major matrix: last dimension = columns.

Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise a + b. `b` may also be a single row broadcast over a's rows (bias).
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor absolute(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);

Tensor softmax(const Tensor& a);

/// Normalizes each row to zero mean and unit variance, then applies
/// gain and bias (each a [cols] row).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-6);

/// Rows of `table` selected by `ids`; result is [ids.size() x table.cols()].
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

/// Concatenation along the last axis. All inputs must have equal row counts.
Tensor concat(const std::vector<Tensor>& parts);

/// x holds `batch` sequences of equal length stacked by rows; returns the mean
/// of each sequence over positions where mask is nonzero ([batch x cols]).
Tensor masked_mean(const Tensor& x, std::span<const std::uint8_t> mask, std::size_t batch);

struct AttentionLayout {
    std::size_t heads = 1;
    std::size_t batch = 1;
    std::size_t query_len = 1;
    std::size_t key_len = 1;
    /// batch * key_len entries; zero marks a padded key. Empty means no padding.
    std::span<const std::uint8_t> key_mask;
    /// Query t may only attend to keys <= t.
    bool causal = false;
};

/// Multi-head scaled dot-product attention on already-projected inputs.
/// q is [batch*query_len x d], k and v are [batch*key_len x d]; heads split d.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionLayout& layout);

/// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// logits, ignoring positions whose target equals pad_id.
/// Throws EmptyBatchError when every target is padding.
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets, TokenId pad_id);

class EmptyBatchError : public Error {
  public:
    using Error::Error;
};

} // namespace mmt::ad
