#pragma once

#include <vector>

#include "ptgnn/numerics/ops.hpp"

PTGNN_NAMESPACE_BEGIN

struct LossWeights {
  real beta = real(1);
  void validate() const;
};

/// (1/N) sum_i ||z_v_i - z_p_i||^2. With `stop_gradient`, z_p is a constant
/// target and only z_v receives gradient.
Tensor align_loss(const Tensor& z_v, const Tensor& z_p, bool stop_gradient = true);

/// cross_entropy(logits, labels) + beta * (1/N) sum_i ||x_c_i - x_cr_i||^2.
/// beta == 0 returns the cross-entropy term alone.
Tensor total_loss(const Tensor& logits, const std::vector<int>& labels, const Tensor& x_c, const Tensor& x_cr,
                  real beta);

/// Cross-entropy of the linear sensor probe.
Tensor sensor_branch_loss(const Tensor& probe_logits, const std::vector<int>& labels);

struct LossTerms {
  Tensor total;
  Tensor sensor_ce;
  Tensor video_ce;
  Tensor align;
};

/// sensor_ce + video_ce + beta * align, with the alignment target detached
/// unless `bidirectional`.
LossTerms training_loss(const Tensor& probe_logits, const Tensor& video_logits, const Tensor& z_v,
                        const Tensor& z_p, const std::vector<int>& labels, real beta, bool bidirectional = false);

PTGNN_NAMESPACE_END
