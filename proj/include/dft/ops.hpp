#pragma once

#include <span>
#include <vector>

#include "dft/tensor.hpp"

namespace dft::ad {

// Differentiable ops over 1-D/2-D tensors. No broadcasting except the
// trailing-dimension bias add; every other shape mismatch is an error.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// m[r,c] + bias[c], broadcast across rows.
Tensor add_bias(const Tensor& m, const Tensor& bias);
/// Sum of all elements, as a scalar.
Tensor sum(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Softmax along the last axis (the only supported one); rows sum to 1,
/// computed with max subtraction.
Tensor softmax(const Tensor& x, int axis = -1);

/// Mean over masked rows of -log softmax(logits)[target]. mask.size() must
/// equal the number of rows; an all-false mask is an error, not 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& mask);

/// 1 - cos(a, b) for same-length vectors; range [0, 2]. Zero-norm operands
/// are an error rather than silently regularized.
Tensor cosine_loss(const Tensor& a, const Tensor& b);

/// Arithmetic mean of the masked rows of h[T,d].
Tensor mean_pool(const Tensor& h, const std::vector<bool>& mask);

/// Row-wise RMS normalization with per-column gain.
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);

Tensor row_slice(const Tensor& x, int start, int len);
Tensor col_slice(const Tensor& x, int start, int len);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(std::span<const Tensor> parts);

/// Replaces entries above the diagonal with a large negative constant so a
/// following softmax attends only to positions <= the query position.
Tensor causal_mask(const Tensor& scores);

Tensor silu(const Tensor& x);

/// Stop-gradient: forwards the value bit-identically, receives none back.
/// Already-constant tensors pass through unchanged.
Tensor detach(const Tensor& x);

}  // namespace dft::ad
