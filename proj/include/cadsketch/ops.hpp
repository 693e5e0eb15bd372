#pragma once

#include <vector>

#include "cadsketch/tensor.hpp"

// Differentiable operations. Each op computes its forward value and, when a
// tape is active and some input requires a gradient, records a backward rule
// that accumulates exact gradients into every input that requires one.
// Shape errors throw ShapeMismatch naming both shapes.
namespace cadsketch::ad {

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Embedding lookup expressed as one-hot (or probability) rows times a table.
inline Tensor embed(const Tensor& rows, const Tensor& table) { return matmul(rows, table); }

/// Elementwise with b broadcast over the leading axes of a (b's shape must
/// equal a trailing suffix of a's shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);

Tensor reshape(const Tensor& a, Shape shape);
/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int begin, int end);
/// Gathers rows of a 2-D tensor.
Tensor select_rows(const Tensor& a, const std::vector<int>& rows);

Tensor softmax(const Tensor& a);  // over the last axis
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);     // exact erf form
Tensor relu(const Tensor& a);
/// Normalizes over the last axis, then applies gain and bias of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

/// x [Cin,H,W], weight [Cout,Cin,k,k] (k odd), bias [Cout]; stride 1, zero
/// "same" padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// 2x2 mean pooling over the last two axes.
Tensor avg_pool2(const Tensor& x);

/// x [C,H,W] -> [(H/p)*(W/p), C*p*p], patches in row-major order.
Tensor patchify(const Tensor& x, int patch);
/// x [P, C*p*p] -> [C,H,W]; inverse of patchify.
Tensor unpatchify(const Tensor& x, int patch, int height, int width);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean squared difference; differentiable in both arguments.
Tensor mse(const Tensor& a, const Tensor& b);
/// Mean over rows of -sum_c target_c * log(max(pred_c, 1e-9)); target is a constant.
Tensor cross_entropy(const Tensor& pred, const Tensor& target);
/// Mean binary cross-entropy with pred clamped to [1e-6, 1 - 1e-6]; target is a constant.
Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target);

}  // namespace cadsketch::ad
