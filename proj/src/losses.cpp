#include "ptgnn/losses.hpp"

#include <cmath>

PTGNN_NAMESPACE_BEGIN

void LossWeights::validate() const {
  if (!(beta >= 0) || !std::isfinite(beta)) {
    throw ConfigError("loss.beta must be a finite non-negative number, got " + std::to_string(beta));
  }
}

Tensor align_loss(const Tensor& z_v, const Tensor& z_p, bool stop_gradient) {
  if (z_v.shape() != z_p.shape() || z_v.dim() != 2 || z_v.size(0) == 0) {
    throw ContractError("align_loss: z_v " + shape_str(z_v.shape()) + " and z_p " + shape_str(z_p.shape()) +
                        " must both be [N, d] with N >= 1");
  }
  return mse(z_v, stop_gradient ? detach(z_p) : z_p);
}

Tensor total_loss(const Tensor& logits, const std::vector<int>& labels, const Tensor& x_c, const Tensor& x_cr,
                  real beta) {
  LossWeights{beta}.validate();
  Tensor ce = cross_entropy(logits, labels);
  if (beta == 0) return ce;
  if (x_c.shape() != x_cr.shape()) {
    throw ContractError("total_loss: x_c " + shape_str(x_c.shape()) + " and x_cr " + shape_str(x_cr.shape()) +
                        " differ");
  }
  return add(ce, scale(mse(x_c, x_cr), beta));
}

Tensor sensor_branch_loss(const Tensor& probe_logits, const std::vector<int>& labels) {
  return cross_entropy(probe_logits, labels);
}

LossTerms training_loss(const Tensor& probe_logits, const Tensor& video_logits, const Tensor& z_v,
                        const Tensor& z_p, const std::vector<int>& labels, real beta, bool bidirectional) {
  LossWeights{beta}.validate();
  LossTerms t;
  t.sensor_ce = sensor_branch_loss(probe_logits, labels);
  t.video_ce = cross_entropy(video_logits, labels);
  t.align = align_loss(z_v, z_p, !bidirectional);
  t.total = add(t.sensor_ce, t.video_ce);
  if (beta != 0) t.total = add(t.total, scale(t.align, beta));
  return t;
}

PTGNN_NAMESPACE_END
