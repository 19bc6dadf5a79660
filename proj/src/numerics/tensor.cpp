#include "ptgnn/numerics/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

PTGNN_NAMESPACE_BEGIN

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<real>& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), real(0));
  return grad;
}

Tensor::Tensor(Shape shape, real fill) : impl_(std::make_shared<TensorImpl>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<real> data) : impl_(std::make_shared<TensorImpl>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::scalar(real v) { return Tensor(Shape{1}, std::vector<real>{v}); }

Tensor Tensor::from(Shape shape, std::initializer_list<real> values) {
  return Tensor(std::move(shape), std::vector<real>(values));
}

TensorImpl& Tensor::checked() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }
std::size_t Tensor::numel() const { return checked().data.size(); }

std::size_t Tensor::size(int axis) const {
  const auto& s = shape();
  const int n = static_cast<int>(s.size());
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(a)];
}

std::span<real> Tensor::data() { return checked().data; }
std::span<const real> Tensor::data() const { return checked().data; }

real Tensor::item() const {
  const auto& d = checked().data;
  if (d.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
  return d[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  checked().requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !checked().grad.empty(); }
std::span<const real> Tensor::grad() const { return checked().grad; }
std::span<real> Tensor::grad_mut() { return checked().grad_buffer(); }
void Tensor::zero_grad() { checked().grad.clear(); }

const std::string& Tensor::name() const { return checked().name; }

Tensor& Tensor::set_name(std::string name) {
  checked().name = std::move(name);
  return *this;
}

std::int64_t Tensor::node_id() const { return checked().node_id; }

Tensor Tensor::clone() const {
  const auto& src = checked();
  Tensor t(src.shape, src.data);
  t.impl_->name = src.name;
  return t;
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local std::shared_ptr<TapeState> g_active;
}

Tape::Tape() : state_(std::make_shared<TapeState>()) {}

Tape::Recording::Recording(Tape& tape) : previous_(g_active) {
  if (tape.state_->consumed) tape.reset();
  g_active = tape.state_;
}

Tape::Recording::~Recording() { g_active = previous_; }

void Tape::reset() { state_ = std::make_shared<TapeState>(); }

TapeState* Tape::active() { return g_active.get(); }
std::shared_ptr<TapeState> Tape::active_shared() { return g_active; }

namespace {

bool all_finite(const std::vector<real>& v) {
  for (real x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void backward(const Tensor& loss) {
  const auto& impl = loss.impl();
  if (!impl) throw ContractError("backward() on undefined tensor");
  if (impl->data.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(impl->shape));
  }
  auto state = impl->tape.lock();
  if (!state || impl->node_id < 0) {
    throw ContractError("backward() on a tensor with no recorded tape");
  }
  if (state->consumed) {
    throw ContractError("backward() called twice on the same tape; re-run the forward pass");
  }
  state->consumed = true;

  impl->grad_buffer()[0] += real(1);
  auto& nodes = state->nodes;
  for (std::size_t i = static_cast<std::size_t>(impl->node_id) + 1; i-- > 0;) {
    auto& node = nodes[i];
    const auto& out = *node.output;
    if (out.grad.empty()) continue;
    if (!all_finite(out.grad)) {
      throw NumericError("non-finite gradient at node " + std::to_string(i) + " (" + node.op + ")");
    }
    node.backward(out);
  }
  for (const auto& node : nodes) {
    for (const auto& in : node.inputs) {
      if (in->requires_grad && in->node_id < 0 && !in->grad.empty() && !all_finite(in->grad)) {
        throw NumericError("non-finite gradient in leaf '" + in->name + "'");
      }
    }
  }
  // Release saved activations; gradients stay on the leaves.
  nodes.clear();
  nodes.shrink_to_fit();
}

namespace detail {

namespace {

Tensor record(Shape shape, std::vector<real> data, std::vector<std::shared_ptr<TensorImpl>> ins,
              const char* op, BackwardFn fn) {
  Tensor out(std::move(shape), std::move(data));
  auto state = Tape::active_shared();
  if (!state) return out;
  bool any = false;
  for (const auto& in : ins) any = any || in->requires_grad;
  if (!any) return out;
  auto& impl = *out.impl();
  impl.requires_grad = true;
  impl.tape = state;
  impl.node_id = static_cast<std::int64_t>(state->nodes.size());
  state->nodes.push_back(TapeNode{op, std::move(ins), out.impl(), std::move(fn)});
  return out;
}

}  // namespace

Tensor make_result(Shape shape, std::vector<real> data, std::initializer_list<Tensor> inputs,
                   const char* op, BackwardFn fn) {
  std::vector<std::shared_ptr<TensorImpl>> ins;
  ins.reserve(inputs.size());
  for (const auto& t : inputs) ins.push_back(t.impl());
  return record(std::move(shape), std::move(data), std::move(ins), op, std::move(fn));
}

Tensor make_result(Shape shape, std::vector<real> data, const std::vector<Tensor>& inputs,
                   const char* op, BackwardFn fn) {
  std::vector<std::shared_ptr<TensorImpl>> ins;
  ins.reserve(inputs.size());
  for (const auto& t : inputs) ins.push_back(t.impl());
  return record(std::move(shape), std::move(data), std::move(ins), op, std::move(fn));
}

}  // namespace detail

namespace {
thread_local BranchTrace* g_branch_trace = nullptr;
}

BranchTrace::BranchTrace() : prev_(g_branch_trace) { g_branch_trace = this; }
BranchTrace::~BranchTrace() { g_branch_trace = prev_; }
BranchTrace* BranchTrace::active() { return g_branch_trace; }

PTGNN_NAMESPACE_END
