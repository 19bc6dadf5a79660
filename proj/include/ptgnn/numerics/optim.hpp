#pragma once

#include <span>
#include <string>
#include <vector>

#include "ptgnn/numerics/tensor.hpp"

PTGNN_NAMESPACE_BEGIN

/// p <- p - lr * g
void sgd_step(std::span<real> param, std::span<const real> grad, real lr);

struct AdamHyper {
  real lr = real(1e-3);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

/// One bias-corrected Adam update. `step` is the 1-based update count.
void adam_step(std::span<real> param, std::span<const real> grad, std::span<real> m,
               std::span<real> v, long step, const AdamHyper& h);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update from the accumulated gradients. Parameters without a
  /// gradient are left untouched. A non-finite gradient aborts with the
  /// parameter's name before anything is modified.
  virtual void step() = 0;
  void zero_grad();
  const std::vector<NamedTensor>& params() const { return params_; }

  /// Moment buffers and counters, named so a checkpoint can persist them.
  virtual std::vector<NamedTensor> state() const { return {}; }
  virtual void load_state(const std::vector<NamedTensor>&) {}
  virtual long steps() const { return 0; }

 protected:
  explicit Optimizer(std::vector<NamedTensor> params);
  void check_finite() const;
  std::vector<NamedTensor> params_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<NamedTensor> params, real lr);
  void step() override;

 private:
  real lr_;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<NamedTensor> params, AdamHyper hyper = {});
  void step() override;
  std::vector<NamedTensor> state() const override;
  void load_state(const std::vector<NamedTensor>& state) override;
  long steps() const override { return step_; }

 private:
  AdamHyper hyper_;
  std::vector<Tensor> m_, v_;
  long step_ = 0;
};

PTGNN_NAMESPACE_END
