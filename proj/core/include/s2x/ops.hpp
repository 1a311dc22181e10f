#pragma once

#include <vector>

#include "s2x/tensor.hpp"

// Differentiable tensor ops. Elementwise binaries broadcast numpy-style
// (right-aligned, size-1 stretches). Every op validates shapes up front and
// checks outputs for non-finite values, throwing NumericalError with the op
// name and input shapes.

namespace s2x {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor gelu(const Tensor& a);

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor transpose(const Tensor& a, int64_t i, int64_t j);
Tensor expand(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);

// Row selection along the middle axis of a rank-3 tensor, with per-sample
// index lists. idx is flattened B*k; entries index into dim 1.
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx, int64_t k);
// Copy of base with base[b, idx[b*k+j], :] replaced by src[b, j, :].
Tensor scatter_rows(const Tensor& base, const std::vector<int64_t>& idx, int64_t k,
                    const Tensor& src);
// out[b] = x[b, idx[b]] for a rank-2 input.
Tensor select_index(const Tensor& x, const std::vector<int64_t>& idx);

Tensor sum(const Tensor& a, int64_t axis, bool keepdim = false);
Tensor mean(const Tensor& a, int64_t axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Batched matmul over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& a, int64_t axis);
// Normalization over the last axis; gamma/beta have that axis's extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Per-channel FIR filtering along the last axis: out[..., c] is the kernel
// column c applied around position c with zero padding. kernel is K x C, K odd.
Tensor conv1d(const Tensor& x, const Tensor& kernel);

// Per-sample cross entropy from raw logits (B x K); labels are 1-based.
// Returns shape {B}.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& labels);
// Row-wise cosine similarity of two B x D tensors -> {B}. Rows where either
// side has exactly zero norm yield 0 and pass no gradient; zero_rows (if
// given) receives the count of such rows.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, int64_t* zero_rows = nullptr);

Tensor l1_norm(const Tensor& a);
Tensor l2_norm(const Tensor& a);

}  // namespace s2x
