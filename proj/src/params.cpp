#include "ptgnn/params.hpp"

#include <cmath>
#include <random>

PTGNN_NAMESPACE_BEGIN

Tensor ParameterSet::insert(const std::string& name, Tensor t, bool learnable) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  t.set_name(name);
  t.set_requires_grad(learnable);
  index_[name] = entries_.size();
  entries_.push_back({name, t, learnable});
  return t;
}

Tensor ParameterSet::add(const std::string& name, Tensor t) { return insert(name, std::move(t), true); }
Tensor ParameterSet::add_buffer(const std::string& name, Tensor t) {
  return insert(name, std::move(t), false);
}

std::vector<NamedTensor> ParameterSet::learnable() const {
  std::vector<NamedTensor> out;
  for (const auto& e : entries_) {
    if (e.learnable) out.push_back({e.name, e.tensor});
  }
  return out;
}

std::vector<NamedTensor> ParameterSet::all() const {
  std::vector<NamedTensor> out;
  for (const auto& e : entries_) out.push_back({e.name, e.tensor});
  return out;
}

std::optional<Tensor> ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return entries_[it->second].tensor;
}

bool ParameterSet::is_learnable(const std::string& name) const {
  auto it = index_.find(name);
  return it != index_.end() && entries_[it->second].learnable;
}

std::size_t ParameterSet::scalar_count(bool learnable_only) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (!learnable_only || e.learnable) n += e.tensor.numel();
  }
  return n;
}

Tensor glorot(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
              const std::string& name) {
  std::mt19937_64 rng(mix_seed(seed, fnv1a(name)));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<real>(u(rng));
  return Tensor(shape, std::move(v));
}

PTGNN_NAMESPACE_END
