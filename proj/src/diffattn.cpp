#include "ptgnn/diffattn.hpp"

#include <algorithm>
#include <cmath>

PTGNN_NAMESPACE_BEGIN

void DaeConfig::validate() const {
  if (d == 0) throw ConfigError("diffattn.d must be positive");
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("diffattn.heads = " + std::to_string(heads) + " does not divide diffattn.d = " +
                      std::to_string(d));
  }
  if (ffn_mult == 0) throw ConfigError("diffattn.ffn_mult must be positive");
  if (!(inter_modality_weight >= 0)) throw ConfigError("diffattn.inter_weight must be non-negative");
  if (!std::isfinite(lambda_logit_init)) throw ConfigError("diffattn.lambda_logit must be finite");
}

std::vector<Tensor> align_time(const std::vector<Tensor>& zs) {
  if (zs.empty()) throw ContractError("align_time: no modalities");
  std::size_t tmin = zs[0].size(1);
  for (const auto& z : zs) {
    if (z.dim() != 4) throw DimensionError("align_time: expected [B, T', N, D], got " + shape_str(z.shape()));
    tmin = std::min(tmin, z.size(1));
  }
  std::vector<Tensor> out;
  for (const auto& z : zs) {
    const std::size_t T = z.size(1);
    out.push_back(T == tmin ? z : slice(z, 1, T - tmin, tmin));
  }
  return out;
}

Tensor project_and_concat(const std::vector<Tensor>& zs, const std::vector<Projection>& proj) {
  if (zs.size() != proj.size() || zs.empty()) {
    throw ContractError("project_and_concat: " + std::to_string(zs.size()) + " inputs for " +
                        std::to_string(proj.size()) + " projections");
  }
  const std::size_t B = zs[0].size(0), T = zs[0].size(1), d = proj[0].weight.size(1);
  std::vector<Tensor> parts;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const Tensor& z = zs[i];
    if (z.dim() != 4) throw DimensionError("project_and_concat: expected [B, T, N, D], got " + shape_str(z.shape()));
    if (z.size(0) != B || z.size(1) != T) {
      throw ContractError("project_and_concat: modality " + std::to_string(i) + " has shape " +
                          shape_str(z.shape()) + ", batch and time must match " + shape_str(zs[0].shape()));
    }
    if (proj[i].weight.size(1) != d) throw ContractError("project_and_concat: projections disagree on d");
    parts.push_back(add(matmul(z, proj[i].weight), proj[i].bias));
  }
  return concat(parts, 2);
}

Tensor difference_operator(const Tensor& X, std::size_t k) {
  if (X.dim() < 2) throw DimensionError("difference_operator: expected a time axis at 1, got " + shape_str(X.shape()));
  return window_difference(X, 1, k);
}

Tensor static_prior(const std::vector<std::size_t>& node_counts, real inter) {
  std::size_t n = 0;
  std::vector<std::size_t> owner;
  for (std::size_t m = 0; m < node_counts.size(); ++m) {
    for (std::size_t i = 0; i < node_counts[m]; ++i) owner.push_back(m);
    n += node_counts[m];
  }
  if (n == 0) throw ConfigError("static_prior: no nodes");
  std::vector<real> v(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < n; ++j) row += owner[i] == owner[j] ? 1.0 : static_cast<double>(inter);
    for (std::size_t j = 0; j < n; ++j) {
      v[i * n + j] = static_cast<real>((owner[i] == owner[j] ? 1.0 : static_cast<double>(inter)) / row);
    }
  }
  return Tensor({n, n}, std::move(v));
}

Tensor attention_input(const Tensor& X, const Tensor& dX, AttentionVariant variant, bool concat_difference) {
  if (concat_difference) return concat({X, dX}, -1);
  return variant == AttentionVariant::difference ? sub(X, dX) : X;
}

Tensor fuse_adjacency(const Tensor& attn, const Tensor& A_static, const Tensor& lambda) {
  if (lambda.numel() != 1) throw DimensionError("fuse_adjacency: lambda must hold one value");
  return add(mul(A_static, lambda), mul(attn, add_scalar(neg(lambda), real(1))));
}

AttentionResult attention(const Tensor& X, const Tensor& dX, const AttentionParams& p, const Tensor& A_static,
                          const Tensor& lambda, std::size_t d, AttentionVariant variant, bool concat_difference) {
  if (X.dim() != 4 || X.shape() != dX.shape()) {
    throw DimensionError("attention: X " + shape_str(X.shape()) + " and dX " + shape_str(dX.shape()) +
                         " must share a [B, T, N, d] shape");
  }
  const std::size_t B = X.size(0), T = X.size(1), N = X.size(2), h = p.wq.size(1);
  if (A_static.dim() != 2 || A_static.size(0) != N || A_static.size(1) != N) {
    throw DimensionError("attention: static adjacency " + shape_str(A_static.shape()) + " does not cover " +
                         std::to_string(N) + " nodes");
  }
  const Tensor r = attention_input(X, dX, variant, concat_difference);
  const Tensor q = reshape(permute(matmul(r, p.wq), {0, 1, 3, 2}), {B, T, h, N, 1});
  const Tensor s = reshape(permute(matmul(r, p.wk), {0, 1, 3, 2}), {B, T, h, 1, N});
  const Tensor energy = scale(add(q, s), real(1) / std::sqrt(static_cast<real>(d)));
  Tensor attn = softmax(energy, -1);
  Tensor fused = fuse_adjacency(attn, A_static, lambda);
  return {attn, fused};
}

DifferenceAttentionEncoder::DifferenceAttentionEncoder(DaeConfig cfg, std::vector<std::size_t> node_counts,
                                                       std::vector<std::size_t> in_depths, ParameterSet& params,
                                                       const std::string& prefix, std::uint64_t seed)
    : cfg_(cfg), node_counts_(std::move(node_counts)) {
  cfg_.validate();
  if (node_counts_.size() != in_depths.size() || node_counts_.empty()) {
    throw ConfigError("diffattn: node counts and input depths must list the same modalities");
  }
  const std::size_t d = cfg_.d, h = cfg_.heads, f = cfg_.ffn_mult * d;
  const std::size_t dr = cfg_.concat_difference ? 2 * d : d;
  auto w = [&](const std::string& n, std::size_t r, std::size_t c) {
    return params.add(prefix + n, glorot({r, c}, r, c, seed, prefix + n));
  };
  auto z = [&](const std::string& n, std::size_t c) { return params.add(prefix + n, Tensor::zeros({c})); };
  auto o = [&](const std::string& n, std::size_t c) { return params.add(prefix + n, Tensor::ones({c})); };
  static const char* names[] = {"eye", "head", "phy"};
  for (std::size_t m = 0; m < in_depths.size(); ++m) {
    const std::string tag = m < 3 ? names[m] : std::to_string(m);
    proj_.push_back({w(".proj." + tag + ".weight", in_depths[m], d), z(".proj." + tag + ".bias", d)});
  }
  attn_.wq = w(".attn.wq", dr, h);
  attn_.wk = w(".attn.wk", dr, h);
  rho_ = params.add(prefix + ".lambda_logit", Tensor({1}, cfg_.lambda_logit_init));
  ln1_g_ = o(".ln1.gamma", d);
  ln1_b_ = z(".ln1.beta", d);
  wv_ = w(".attn.wv", d, d);
  wo_ = w(".attn.wo", d, d);
  bo_ = z(".attn.bo", d);
  ln2_g_ = o(".ln2.gamma", d);
  ln2_b_ = z(".ln2.beta", d);
  w1_ = w(".ffn.w1", d, f);
  b1_ = z(".ffn.b1", f);
  w2_ = w(".ffn.w2", f, d);
  b2_ = z(".ffn.b2", d);
  a_static_ = params.add_buffer(prefix + ".static_adjacency", static_prior(node_counts_, cfg_.inter_modality_weight));
}

std::size_t DifferenceAttentionEncoder::total_nodes() const {
  std::size_t n = 0;
  for (auto c : node_counts_) n += c;
  return n;
}

Tensor DifferenceAttentionEncoder::lambda() const { return sigmoid(rho_); }

DaeOutput DifferenceAttentionEncoder::forward(const std::vector<Tensor>& zs, Mode) const {
  if (zs.size() != proj_.size()) {
    throw ContractError("diffattn: expected " + std::to_string(proj_.size()) + " modalities, got " +
                        std::to_string(zs.size()));
  }
  for (std::size_t m = 0; m < zs.size(); ++m) {
    if (zs[m].dim() != 4 || zs[m].size(2) != node_counts_[m]) {
      throw DimensionError("diffattn: modality " + std::to_string(m) + " expected " +
                           std::to_string(node_counts_[m]) + " nodes, got " + shape_str(zs[m].shape()));
    }
  }
  const Tensor X = project_and_concat(align_time(zs), proj_);
  const std::size_t B = X.size(0), T = X.size(1), N = X.size(2), d = cfg_.d, h = cfg_.heads, dh = d / h;
  const Tensor dX = difference_operator(X, cfg_.k);
  AttentionResult ar = attention(X, dX, attn_, a_static_, lambda(), d, cfg_.variant, cfg_.concat_difference);

  const Tensor v = reshape(matmul(layernorm(X, ln1_g_, ln1_b_), wv_), {B, T, N, h, dh});
  const Tensor heads = matmul(ar.fused, permute(v, {0, 1, 3, 2, 4}));  // [B, T, h, N, dh]
  const Tensor msg = reshape(permute(heads, {0, 1, 3, 2, 4}), {B, T, N, d});
  const Tensor X1 = add(X, add(matmul(msg, wo_), bo_));
  const Tensor ff = add(matmul(relu(add(matmul(layernorm(X1, ln2_g_, ln2_b_), w1_), b1_)), w2_), b2_);
  const Tensor X2 = add(X1, ff);
  const Tensor zp = mean(mean(X2, 2, false), 1, false);
  return {zp, X, ar.attn, ar.fused, X2};
}

PTGNN_NAMESPACE_END
