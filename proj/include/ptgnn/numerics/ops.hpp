#pragma once

#include <cstdint>
#include <vector>

#include "ptgnn/numerics/tensor.hpp"

PTGNN_NAMESPACE_BEGIN

// Elementwise binary ops broadcast with numpy rules (shapes aligned on the
// right, extent-1 axes stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, real factor);
Tensor add_scalar(const Tensor& x, real value);
Tensor neg(const Tensor& x);

/// Subgradient at 0 is 0.
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Subgradient at 0 is 0.
Tensor abs(const Tensor& x);
/// (x + eps)^(-1/2), elementwise.
Tensor rsqrt(const Tensor& x, real eps = real(0));

/// Batched matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);

/// Copy that carries no autodiff history (stop-gradient).
Tensor detach(const Tensor& x);

/// Moving average along `axis` over the symmetric window [t-k, t+k]; samples
/// outside the axis repeat the nearest edge sample.
Tensor window_mean(const Tensor& x, int axis, std::size_t k);

/// x - window_mean(x, axis, k), accumulated as deviations from the center
/// sample so constant signals give exact zeros.
Tensor window_difference(const Tensor& x, int axis, std::size_t k);

/// 1D cross-correlation (the kernel is not flipped).
/// x: [B, C_in, L], w: [C_out, C_in, K], b: [C_out] or undefined.
/// L_out = floor((L + 2*padding - K) / stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t padding);

/// 2D cross-correlation. x: [B, C_in, H, W], w: [C_out, C_in, KH, KW].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t padding);

/// x: [B, C, L]; non-overlapping windows when stride == window.
Tensor maxpool1d(const Tensor& x, std::size_t window, std::size_t stride);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  real momentum = real(0.1);
  real eps = real(1e-5);

  static BatchNormState create(std::size_t channels);
};

/// Normalizes axis 1 of x ([B, C] or [B, C, L]). Train mode uses batch
/// statistics (biased variance) and updates the running estimates; eval mode
/// uses the running estimates.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 Mode mode);

/// Normalizes over the last axis.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 real eps = real(1e-5));

/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity in eval mode.
Tensor dropout(const Tensor& x, real p, Mode mode, std::uint64_t seed);

/// Mean over the leading axis of squared L2 row norms:
/// (1/N) * sum_i ||a_i - b_i||^2. A 1-D input is a single row.
Tensor mse(const Tensor& a, const Tensor& b);

/// Mean cross-entropy of logits [B, C] (or [C]) against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

PTGNN_NAMESPACE_END
