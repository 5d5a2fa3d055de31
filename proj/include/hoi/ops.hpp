#pragma once

// Differentiable primitives. Elementwise binary ops require equal shapes,
// except that either operand may be a single-element tensor.

#include <span>
#include <vector>

#include "hoi/tensor.hpp"

namespace hoi::ops {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// log(sigmoid(x)) without overflow.
Tensor log_sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
/// x^e for x >= 0.
Tensor pow_scalar(const Tensor& x, double e);

// reductions
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum of absolute values.
Tensor l1_norm(const Tensor& x);
/// Row sums of a matrix, shape [rows].
Tensor sum_rows(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

// linear algebra and layout
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// out[i] = x[i, cols[i]].
Tensor pick(const Tensor& x, std::span<const std::size_t> cols);

// normalisation
/// Softmax along `axis`. Entries at or below kernels::kMaskThreshold (or -inf)
/// come out exactly 0; an all-masked slice throws DegenerateRowError.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
/// Rows of a matrix (or a vector) scaled to unit L2 norm.
Tensor l2_normalize(const Tensor& x);
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// layers
/// x [n x in] * w [in x out] + b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Scaled dot-product attention: softmax(scale * q k^T + mask) v. The mask is
/// a constant [queries x keys] additive tensor (empty for none).
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& mask,
                 double scale);

}  // namespace hoi::ops
