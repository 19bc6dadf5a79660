#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ptgnn/common.hpp"

PTGNN_NAMESPACE_BEGIN

struct TapeState;

struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty when no gradient has been accumulated
  bool requires_grad = false;
  std::weak_ptr<TapeState> tape;
  std::int64_t node_id = -1;  // -1 for leaves
  std::string name;

  /// Gradient buffer, zero-allocated on first use.
  std::vector<real>& grad_buffer();
};

/// Dense row-major array with reverse-mode differentiation.
///
/// `Tensor` is a handle: copies share the same storage. Operations that run
/// while a `Tape` is recording and touch a tensor with `requires_grad` are
/// recorded and can later be differentiated with `backward`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, std::vector<real> data);

  static Tensor scalar(real v);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), real(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), real(1)); }
  static Tensor from(Shape shape, std::initializer_list<real> values);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t numel() const;
  /// Extent of `axis`; negative axes count from the back.
  std::size_t size(int axis) const;

  std::span<real> data();
  std::span<const real> data() const;
  real item() const;
  real at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const;
  std::span<const real> grad() const;
  std::span<real> grad_mut();
  void zero_grad();

  const std::string& name() const;
  Tensor& set_name(std::string name);
  std::int64_t node_id() const;

  /// Deep copy without autodiff history.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  TensorImpl& checked() const;
  std::shared_ptr<TensorImpl> impl_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using BackwardFn = std::function<void(const TensorImpl& out)>;

struct TapeNode {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  BackwardFn backward;
};

struct TapeState {
  std::vector<TapeNode> nodes;
  bool consumed = false;
};

/// Ordered record of primitive operations. Nodes are appended in execution
/// order, so every node's parents precede it.
///
/// Recording is thread-local: `Tape::Recording` makes this tape the active
/// one for the current thread only, so independent training contexts on
/// different threads never share a tape.
class Tape {
 public:
  Tape();

  class Recording {
   public:
    explicit Recording(Tape& tape);
    ~Recording();
    Recording(const Recording&) = delete;
    Recording& operator=(const Recording&) = delete;

   private:
    std::shared_ptr<TapeState> previous_;
  };

  Recording record() { return Recording(*this); }
  std::size_t size() const { return state_->nodes.size(); }
  bool consumed() const { return state_->consumed; }
  /// Drops all nodes so the tape can record a new forward pass.
  void reset();

  static TapeState* active();
  static std::shared_ptr<TapeState> active_shared();

 private:
  std::shared_ptr<TapeState> state_;
};

/// Back-propagates from a scalar `loss` through the tape it was recorded on.
/// Gradients accumulate into every `requires_grad` ancestor. A tape can be
/// differentiated only once.
void backward(const Tensor& loss);

namespace detail {

/// Builds an op result and records it on the active tape when any input
/// requires a gradient.
Tensor make_result(Shape shape, std::vector<real> data, std::initializer_list<Tensor> inputs,
                   const char* op, BackwardFn fn);
Tensor make_result(Shape shape, std::vector<real> data, const std::vector<Tensor>& inputs,
                   const char* op, BackwardFn fn);

inline bool needs_grad(const std::shared_ptr<TensorImpl>& t) { return t && t->requires_grad; }

}  // namespace detail

/// Fingerprint of the branches taken by non-smooth ops (relu, abs, max-pool)
/// while a trace is installed on this thread. Two evaluations with equal
/// fingerprints lie in the same smooth piece of the function.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void mix(std::uint64_t v) { hash_ = (hash_ ^ v) * 0x100000001b3ULL; }

  /// Innermost installed trace on this thread, or null.
  static BranchTrace* active();

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  BranchTrace* prev_;
};

PTGNN_NAMESPACE_END
