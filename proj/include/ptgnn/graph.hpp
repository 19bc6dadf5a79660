#pragma once

#include <string>

#include "ptgnn/encoders.hpp"

PTGNN_NAMESPACE_BEGIN

/// Learnable fully connected adjacency. Only `raw` is trained; the effective
/// matrix 0.5 * (raw + raw^T) is symmetric bit for bit.
struct AdjacencyParam {
  Tensor raw;  // [N, N]
  bool normalized = false;

  std::size_t nodes() const { return raw.size(0); }
  /// Effective adjacency. With `normalized`, entries are scaled by
  /// d_i * d_j where d = (row sums of |A|)^(-1/2).
  Tensor effective() const;
};

/// raw = I + symmetric uniform noise in [-0.01, 0.01].
AdjacencyParam init_adjacency(std::size_t n, std::uint64_t seed, const std::string& name = "adjacency");

/// Two propagation steps sharing one adjacency:
/// E'_t = relu(A E_t W1), Z_t = A E'_t W2.
/// E: [B, T', N, D], W1: [D, H], W2: [H, D'] -> [B, T', N, D'].
Tensor gcn_forward(const Tensor& E, const AdjacencyParam& A, const Tensor& W1, const Tensor& W2);

/// Mean over the time axis: [B, T', N, D] -> [B, N, D].
Tensor temporal_pool(const Tensor& Zt);

struct GraphEmbedding {
  Tensor tensor;  // [B, N, D']
  Modality modality = Modality::eye;
};

/// Per-modality GCN with parameters `<prefix>.adjacency`, `<prefix>.w1`, `<prefix>.w2`.
class GraphModule {
 public:
  GraphModule(Modality m, std::size_t nodes, std::size_t in_depth, std::size_t hidden, std::size_t out_depth,
              bool normalized, ParameterSet& params, const std::string& prefix, std::uint64_t seed);

  /// Time-indexed node features Z_t, [B, T', N, D'].
  Tensor forward(const ModalityEmbedding& E) const;
  GraphEmbedding forward_pooled(const ModalityEmbedding& E) const;

  const AdjacencyParam& adjacency() const { return adj_; }
  Modality modality() const { return modality_; }
  std::size_t out_depth() const { return w2_.size(1); }

 private:
  Modality modality_;
  AdjacencyParam adj_;
  Tensor w1_, w2_;
};

PTGNN_NAMESPACE_END
