#pragma once

#include <array>
#include <string>
#include <vector>

#include "ptgnn/encoders.hpp"

PTGNN_NAMESPACE_BEGIN

enum class AttentionVariant {
  difference,  // r_i = X_i - dX_i
  standard,    // r_i = X_i
};

struct DaeConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t k = 2;  // half-width of the difference window (kernel 2k+1)
  AttentionVariant variant = AttentionVariant::difference;
  bool concat_difference = false;  // r_i = [X_i || dX_i]
  real lambda_logit_init = real(0);
  real inter_modality_weight = real(0.01);
  std::size_t ffn_mult = 2;

  void validate() const;
};

/// Keeps the trailing min(T') steps of every modality so all share one time axis.
std::vector<Tensor> align_time(const std::vector<Tensor>& zs);

struct Projection {
  Tensor weight;  // [D_in, d]
  Tensor bias;    // [d]
};

/// X'_i = X_i W_i + b_i per modality, then concatenation along the node axis
/// in input order. Inputs [B, T, N_i, D_i] -> [B, T, sum N_i, d].
Tensor project_and_concat(const std::vector<Tensor>& zs, const std::vector<Projection>& proj);

/// dX_t = X_t - mean(X_{t-k} .. X_{t+k}) along axis 1, edges replicated.
Tensor difference_operator(const Tensor& X, std::size_t k);

/// Row-stochastic prior: weight 1 inside a modality block, `inter` between
/// modalities, then each row divided by its sum.
Tensor static_prior(const std::vector<std::size_t>& node_counts, real inter);

struct AttentionParams {
  Tensor wq;  // [d_r, h]
  Tensor wk;  // [d_r, h]
};

struct AttentionResult {
  Tensor attn;   // [B, T, h, N, N], rows sum to 1
  Tensor fused;  // lambda * A_static + (1 - lambda) * attn
};

/// Node representation fed to the energy function.
Tensor attention_input(const Tensor& X, const Tensor& dX, AttentionVariant variant, bool concat_difference);

/// Energy_ij = r_i . wq[:, h] + r_j . wk[:, h]; attn = softmax_j(Energy / sqrt(d)).
/// `lambda` is a one-element tensor in [0, 1].
AttentionResult attention(const Tensor& X, const Tensor& dX, const AttentionParams& p, const Tensor& A_static,
                          const Tensor& lambda, std::size_t d, AttentionVariant variant,
                          bool concat_difference = false);

/// X: [B, T, N, d] -> attention computed on r_i = X_i.
inline AttentionResult standard_attention_variant(const Tensor& X, const AttentionParams& p,
                                                  const Tensor& A_static, const Tensor& lambda, std::size_t d) {
  return attention(X, X, p, A_static, lambda, d, AttentionVariant::standard);
}

/// lambda * A_static + (1 - lambda) * attn.
Tensor fuse_adjacency(const Tensor& attn, const Tensor& A_static, const Tensor& lambda);

struct DaeOutput {
  Tensor z_p;    // [B, d]
  Tensor X;      // projected features [B, T, N, d]
  Tensor attn;   // [B, T, h, N, N]
  Tensor fused;  // [B, T, h, N, N]
  Tensor block;  // transformer output before pooling [B, T, N, d]
};

/// Difference attention encoder. Pre-norm transformer block:
///   X1 = X + (Ã · split_heads(LN1(X) Wv)) Wo + bo
///   X2 = X1 + W2 relu(W1 LN2(X1) + b1) + b2
/// followed by a mean over time and nodes.
class DifferenceAttentionEncoder {
 public:
  DifferenceAttentionEncoder(DaeConfig cfg, std::vector<std::size_t> node_counts,
                             std::vector<std::size_t> in_depths, ParameterSet& params, const std::string& prefix,
                             std::uint64_t seed);

  /// zs: per-modality time-indexed graph features [B, T'_m, N_m, D'_m].
  DaeOutput forward(const std::vector<Tensor>& zs, Mode mode) const;

  Tensor lambda() const;
  const Tensor& static_adjacency() const { return a_static_; }
  const DaeConfig& config() const { return cfg_; }
  std::size_t total_nodes() const;

 private:
  DaeConfig cfg_;
  std::vector<std::size_t> node_counts_;
  std::vector<Projection> proj_;
  AttentionParams attn_;
  Tensor rho_;
  Tensor a_static_;
  Tensor ln1_g_, ln1_b_, ln2_g_, ln2_b_;
  Tensor wv_, wo_, bo_, w1_, b1_, w2_, b2_;
};

/// Free-function form used by the pipeline.
inline DaeOutput dae_forward(const std::vector<Tensor>& zs, const DifferenceAttentionEncoder& dae, Mode mode) {
  return dae.forward(zs, mode);
}

PTGNN_NAMESPACE_END
