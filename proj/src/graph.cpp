#include "ptgnn/graph.hpp"

#include <random>

PTGNN_NAMESPACE_BEGIN

Tensor AdjacencyParam::effective() const {
  Tensor a = scale(add(raw, transpose(raw)), real(0.5));
  if (!normalized) return a;
  const std::size_t n = nodes();
  // d_i * d_j commutes exactly, so the scaled matrix stays symmetric.
  Tensor d = rsqrt(sum(abs(a), 1, false), real(1e-6));
  return mul(a, mul(reshape(d, {n, 1}), reshape(d, {1, n})));
}

AdjacencyParam init_adjacency(std::size_t n, std::uint64_t seed, const std::string& name) {
  if (n == 0) throw ConfigError("init_adjacency: node count must be positive");
  std::mt19937_64 rng(mix_seed(seed, fnv1a(name)));
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  std::vector<real> v(n * n, real(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const real e = static_cast<real>(u(rng)) + (i == j ? real(1) : real(0));
      v[i * n + j] = e;
      v[j * n + i] = e;
    }
  }
  return {Tensor({n, n}, std::move(v)), false};
}

Tensor gcn_forward(const Tensor& E, const AdjacencyParam& A, const Tensor& W1, const Tensor& W2) {
  const Shape& es = E.shape();
  if (es.size() != 4) throw DimensionError("gcn_forward: expected [B, T', N, D] embedding, got " + shape_str(es));
  if (A.raw.dim() != 2 || A.raw.size(0) != A.raw.size(1)) {
    throw DimensionError("gcn_forward: adjacency must be square, got " + shape_str(A.raw.shape()));
  }
  if (es[2] != A.nodes()) {
    throw DimensionError("gcn_forward: embedding has " + std::to_string(es[2]) + " nodes but adjacency has " +
                         std::to_string(A.nodes()));
  }
  if (W1.dim() != 2 || W1.size(0) != es[3] || W2.dim() != 2 || W2.size(0) != W1.size(1)) {
    throw DimensionError("gcn_forward: weights " + shape_str(W1.shape()) + " and " + shape_str(W2.shape()) +
                         " do not fit depth " + std::to_string(es[3]));
  }
  const Tensor a = A.effective();
  Tensor h = relu(matmul(a, matmul(E, W1)));
  return matmul(a, matmul(h, W2));
}

Tensor temporal_pool(const Tensor& Zt) {
  if (Zt.dim() != 4) throw DimensionError("temporal_pool: expected [B, T', N, D], got " + shape_str(Zt.shape()));
  return mean(Zt, 1, false);
}

GraphModule::GraphModule(Modality m, std::size_t nodes, std::size_t in_depth, std::size_t hidden,
                         std::size_t out_depth, bool normalized, ParameterSet& params, const std::string& prefix,
                         std::uint64_t seed)
    : modality_(m) {
  adj_ = init_adjacency(nodes, seed, prefix + ".adjacency");
  adj_.normalized = normalized;
  adj_.raw = params.add(prefix + ".adjacency", adj_.raw);
  w1_ = params.add(prefix + ".w1", glorot({in_depth, hidden}, in_depth, hidden, seed, prefix + ".w1"));
  w2_ = params.add(prefix + ".w2", glorot({hidden, out_depth}, hidden, out_depth, seed, prefix + ".w2"));
}

Tensor GraphModule::forward(const ModalityEmbedding& E) const {
  if (E.modality != modality_) {
    throw ContractError("graph." + std::string(modality_name(modality_)) + " received a " +
                        std::string(modality_name(E.modality)) + " embedding");
  }
  return gcn_forward(E.tensor, adj_, w1_, w2_);
}

GraphEmbedding GraphModule::forward_pooled(const ModalityEmbedding& E) const {
  return {temporal_pool(forward(E)), modality_};
}

PTGNN_NAMESPACE_END
