#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ptgnn/numerics/tensor.hpp"

PTGNN_NAMESPACE_BEGIN

/// Ordered registry of named model tensors. Learnable parameters receive
/// gradients; buffers (normalization statistics, running means) are only
/// persisted.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  std::vector<NamedTensor> learnable() const;
  std::vector<NamedTensor> all() const;
  std::optional<Tensor> find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  bool is_learnable(const std::string& name) const;
  std::size_t scalar_count(bool learnable_only = true) const;

 private:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool learnable;
  };
  Tensor insert(const std::string& name, Tensor t, bool learnable);
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Glorot-uniform tensor whose values depend only on (seed, name).
Tensor glorot(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed,
              const std::string& name);

PTGNN_NAMESPACE_END
