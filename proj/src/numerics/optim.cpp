#include "ptgnn/numerics/optim.hpp"

#include <cmath>

PTGNN_NAMESPACE_BEGIN

void sgd_step(std::span<real> param, std::span<const real> grad, real lr) {
  if (param.size() != grad.size()) throw DimensionError("sgd_step: gradient size mismatch");
  if (!(lr > 0)) throw ConfigError("sgd_step: learning rate must be > 0");
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

void adam_step(std::span<real> param, std::span<const real> grad, std::span<real> m,
               std::span<real> v, long step, const AdamHyper& h) {
  if (param.size() != grad.size() || m.size() != param.size() || v.size() != param.size()) {
    throw DimensionError("adam_step: buffer size mismatch");
  }
  if (!(h.lr > 0)) throw ConfigError("adam_step: learning rate must be > 0");
  const double c1 = 1.0 - std::pow(static_cast<double>(h.beta1), static_cast<double>(step));
  const double c2 = 1.0 - std::pow(static_cast<double>(h.beta2), static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1 - h.beta1) * grad[i];
    v[i] = h.beta2 * v[i] + (1 - h.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= static_cast<real>(h.lr * mhat / (std::sqrt(vhat) + h.eps));
  }
}

Optimizer::Optimizer(std::vector<NamedTensor> params) : params_(std::move(params)) {}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::check_finite() const {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (real g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + p.name + "'");
    }
  }
}

Sgd::Sgd(std::vector<NamedTensor> params, real lr) : Optimizer(std::move(params)), lr_(lr) {
  if (!(lr > 0)) throw ConfigError("sgd: learning rate must be > 0");
}

void Sgd::step() {
  check_finite();
  for (auto& p : params_) {
    if (p.tensor.has_grad()) sgd_step(p.tensor.data(), p.tensor.grad(), lr_);
  }
}

Adam::Adam(std::vector<NamedTensor> params, AdamHyper hyper)
    : Optimizer(std::move(params)), hyper_(hyper) {
  if (!(hyper.lr > 0)) throw ConfigError("adam: learning rate must be > 0");
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.tensor.shape()));
    v_.push_back(Tensor::zeros(p.tensor.shape()));
  }
}

void Adam::step() {
  check_finite();
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    adam_step(p.data(), p.grad(), m_[i].data(), v_[i].data(), step_, hyper_);
  }
}

std::vector<NamedTensor> Adam::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"optim.adam.m." + params_[i].name, m_[i]});
    out.push_back({"optim.adam.v." + params_[i].name, v_[i]});
  }
  out.push_back({"optim.adam.step", Tensor::scalar(static_cast<real>(step_))});
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& state) {
  for (const auto& s : state) {
    if (s.name == "optim.adam.step") {
      step_ = static_cast<long>(s.tensor.item());
      continue;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const bool is_m = s.name == "optim.adam.m." + params_[i].name;
      const bool is_v = s.name == "optim.adam.v." + params_[i].name;
      if (!is_m && !is_v) continue;
      auto& dst = is_m ? m_[i] : v_[i];
      if (dst.shape() != s.tensor.shape()) throw CheckpointError("optimizer state shape mismatch for " + s.name);
      std::copy(s.tensor.data().begin(), s.tensor.data().end(), dst.data().begin());
    }
  }
}

PTGNN_NAMESPACE_END
