#include "ptgnn/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "kernels.hpp"

PTGNN_NAMESPACE_BEGIN

using detail::make_result;
using detail::needs_grad;

namespace {

std::size_t norm_axis(int axis, std::size_t ndim, const char* op) {
  const int n = static_cast<int>(ndim);
  const int a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(ndim));
  }
  return static_cast<std::size_t>(a);
}

// outer x axis x inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// ---------------------------------------------------------------------------
// Broadcasting

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> dims, sa, sb;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t nd = std::max(a.size(), b.size());
  BroadcastPlan p;
  p.out.resize(nd);
  std::vector<std::size_t> ea(nd, 1), eb(nd, 1);
  std::copy(a.begin(), a.end(), ea.begin() + static_cast<std::ptrdiff_t>(nd - a.size()));
  std::copy(b.begin(), b.end(), eb.begin() + static_cast<std::ptrdiff_t>(nd - b.size()));
  for (std::size_t i = 0; i < nd; ++i) {
    if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                           shape_str(b));
    }
    p.out[i] = std::max(ea[i], eb[i]);
  }
  std::vector<std::size_t> sa(nd), sb(nd);
  std::size_t ca = 1, cb = 1;
  for (std::size_t i = nd; i-- > 0;) {
    sa[i] = ea[i] == 1 ? 0 : ca;
    sb[i] = eb[i] == 1 ? 0 : cb;
    ca *= ea[i];
    cb *= eb[i];
  }
  // Coalesce adjacent axes that are jointly contiguous.
  for (std::size_t i = 0; i < nd; ++i) {
    if (p.out[i] == 1) continue;
    if (!p.dims.empty()) {
      const std::size_t last = p.dims.size() - 1;
      if (p.sa[last] == sa[i] * p.out[i] && p.sb[last] == sb[i] * p.out[i]) {
        p.dims[last] *= p.out[i];
        p.sa[last] = sa[i];
        p.sb[last] = sb[i];
        continue;
      }
    }
    p.dims.push_back(p.out[i]);
    p.sa.push_back(sa[i]);
    p.sb.push_back(sb[i]);
  }
  if (p.dims.empty()) {
    p.dims = {1};
    p.sa = {0};
    p.sb = {0};
  }
  return p;
}

template <class F>
void broadcast_loop(const BroadcastPlan& p, F&& f) {
  const std::size_t nd = p.dims.size();
  const std::size_t inner = p.dims.back();
  const std::size_t sai = p.sa.back(), sbi = p.sb.back();
  std::size_t total = 1;
  for (auto d : p.dims) total *= d;
  const std::size_t outer = total / inner;
  std::vector<std::size_t> idx(nd, 0);
  std::size_t oa = 0, ob = 0, o = 0;
  for (std::size_t r = 0; r < outer; ++r) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, oa + j * sai, ob + j * sbi);
    o += inner;
    for (std::size_t d = nd - 1; d-- > 0;) {
      ++idx[d];
      oa += p.sa[d];
      ob += p.sb[d];
      if (idx[d] < p.dims[d]) break;
      oa -= p.sa[d] * p.dims[d];
      ob -= p.sb[d] * p.dims[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  auto plan = plan_broadcast(a.shape(), b.shape(), name);
  std::vector<real> out(shape_numel(plan.out));
  const real* pa = a.data().data();
  const real* pb = b.data().data();
  switch (op) {
    case BinOp::add:
      broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] + pb[j]; });
      break;
    case BinOp::sub:
      broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] - pb[j]; });
      break;
    case BinOp::mul:
      broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = pa[i] * pb[j]; });
      break;
  }
  auto ia = a.impl(), ib = b.impl();
  return make_result(plan.out, std::move(out), {a, b}, name, [ia, ib, plan, op](const TensorImpl& o) {
    const real* g = o.grad.data();
    if (needs_grad(ia)) {
      real* ga = ia->grad_buffer().data();
      if (op == BinOp::mul) {
        const real* pb = ib->data.data();
        broadcast_loop(plan, [&](std::size_t k, std::size_t i, std::size_t j) { ga[i] += g[k] * pb[j]; });
      } else {
        broadcast_loop(plan, [&](std::size_t k, std::size_t i, std::size_t) { ga[i] += g[k]; });
      }
    }
    if (needs_grad(ib)) {
      real* gb = ib->grad_buffer().data();
      if (op == BinOp::mul) {
        const real* pa = ia->data.data();
        broadcast_loop(plan, [&](std::size_t k, std::size_t i, std::size_t j) { gb[j] += g[k] * pa[i]; });
      } else if (op == BinOp::sub) {
        broadcast_loop(plan, [&](std::size_t k, std::size_t, std::size_t j) { gb[j] -= g[k]; });
      } else {
        broadcast_loop(plan, [&](std::size_t k, std::size_t, std::size_t j) { gb[j] += g[k]; });
      }
    }
  });
}

// Elementwise unary op: `f` gives the value, `df(x, y)` the local derivative.
template <class F, class DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
  const auto& xd = x.impl()->data;
  std::vector<real> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {x}, name, [ix, df](const TensorImpl& o) {
    if (!needs_grad(ix)) return;
    auto& g = ix->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * df(ix->data[i], o.data[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }

Tensor scale(const Tensor& x, real factor) {
  return unary(
      x, "scale", [factor](real v) { return v * factor; }, [factor](real, real) { return factor; });
}

Tensor add_scalar(const Tensor& x, real value) {
  return unary(
      x, "add_scalar", [value](real v) { return v + value; }, [](real, real) { return real(1); });
}

Tensor neg(const Tensor& x) { return scale(x, real(-1)); }

static void trace_signs(const Tensor& x) {
  if (auto* bt = BranchTrace::active()) {
    for (real v : x.data()) bt->mix(v > 0 ? 1 : (v < 0 ? 2 : 3));
  }
}

Tensor relu(const Tensor& x) {
  trace_signs(x);
  return unary(
      x, "relu", [](real v) { return v > 0 ? v : real(0); },
      [](real v, real) { return v > 0 ? real(1) : real(0); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](real v) {
        return v >= 0 ? real(1) / (real(1) + std::exp(-v)) : std::exp(v) / (real(1) + std::exp(v));
      },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor abs(const Tensor& x) {
  trace_signs(x);
  return unary(
      x, "abs", [](real v) { return std::abs(v); },
      [](real v, real) { return v > 0 ? real(1) : (v < 0 ? real(-1) : real(0)); });
}

Tensor rsqrt(const Tensor& x, real eps) {
  for (real v : x.data()) {
    if (!(v + eps > 0)) throw NumericError("rsqrt of non-positive value");
  }
  return unary(
      x, "rsqrt", [eps](real v) { return real(1) / std::sqrt(v + eps); },
      [](real, real y) { return real(-0.5) * y * y * y; });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa[sa.size() - 1] != sb[sb.size() - 2]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t M = sa[sa.size() - 2], K = sa.back(), N = sb.back();
  Shape ba(sa.begin(), sa.end() - 2), bb(sb.begin(), sb.end() - 2);
  if (ba.empty()) ba = {1};
  if (bb.empty()) bb = {1};
  BroadcastPlan plan;
  try {
    plan = plan_broadcast(ba, bb, "matmul");
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch extents of " + shape_str(sa) + " and " + shape_str(sb) +
                         " do not broadcast");
  }
  Shape out_shape;
  if (sa.size() > 2 || sb.size() > 2) out_shape = plan.out;
  out_shape.push_back(M);
  out_shape.push_back(N);

  const bool shared_b = sb.size() == 2;  // A's batch folds into M
  const bool shared_a = !shared_b && sa.size() == 2;
  std::vector<real> out(shape_numel(out_shape), real(0));
  const real* pa = a.data().data();
  const real* pb = b.data().data();
  const std::size_t nbatch = shape_numel(plan.out);
  if (shared_b) {
    kernels::gemm_nn(nbatch * M, N, K, pa, pb, out.data());
  } else {
    broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) {
      kernels::gemm_nn(M, N, K, pa + i * M * K, pb + j * K * N, out.data() + o * M * N);
    });
  }
  auto ia = a.impl(), ib = b.impl();
  return make_result(out_shape, std::move(out), {a, b}, "matmul",
                     [ia, ib, plan, M, N, K, nbatch, shared_b, shared_a](const TensorImpl& o) {
                       const real* g = o.grad.data();
                       if (shared_a) {
                         // one GEMM over all batches for the shared left operand
                         const real* pa = ia->data.data();
                         const real* pb = ib->data.data();
                         if (needs_grad(ia)) {
                           std::vector<real> gt(nbatch * N * M), bt(nbatch * N * K);
                           for (std::size_t q = 0; q < nbatch; ++q) {
                             for (std::size_t i = 0; i < M; ++i)
                               for (std::size_t j = 0; j < N; ++j) gt[(q * N + j) * M + i] = g[(q * M + i) * N + j];
                             for (std::size_t k = 0; k < K; ++k)
                               for (std::size_t j = 0; j < N; ++j) bt[(q * N + j) * K + k] = pb[(q * K + k) * N + j];
                           }
                           kernels::gemm_tn(M, K, nbatch * N, gt.data(), bt.data(), ia->grad_buffer().data());
                         }
                         if (needs_grad(ib)) {
                           real* gb = ib->grad_buffer().data();
                           for (std::size_t q = 0; q < nbatch; ++q) {
                             kernels::gemm_tn(K, N, M, pa, g + q * M * N, gb + q * K * N);
                           }
                         }
                         return;
                       }
                       if (shared_b) {
                         if (needs_grad(ia)) {
                           kernels::gemm_nt(nbatch * M, K, N, g, ib->data.data(),
                                            ia->grad_buffer().data());
                         }
                         if (needs_grad(ib)) {
                           kernels::gemm_tn(K, N, nbatch * M, ia->data.data(), g,
                                            ib->grad_buffer().data());
                         }
                         return;
                       }
                       real* ga = needs_grad(ia) ? ia->grad_buffer().data() : nullptr;
                       real* gb = needs_grad(ib) ? ib->grad_buffer().data() : nullptr;
                       const real* pa = ia->data.data();
                       const real* pb = ib->data.data();
                       broadcast_loop(plan, [&](std::size_t k, std::size_t i, std::size_t j) {
                         const real* gk = g + k * M * N;
                         if (ga) kernels::gemm_nt(M, K, N, gk, pb + j * K * N, ga + i * M * K);
                         if (gb) kernels::gemm_tn(K, N, M, pa + i * M * K, gk, gb + j * K * N);
                       });
                     });
}

// ---------------------------------------------------------------------------
// shape ops

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<real> out(x.data().begin(), x.data().end());
  auto ix = x.impl();
  return make_result(std::move(shape), std::move(out), {x}, "reshape", [ix](const TensorImpl& o) {
    if (!needs_grad(ix)) return;
    auto& g = ix->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

namespace {

// Index map such that out[i] = in[map[i]] for a permutation.
std::vector<std::size_t> permute_map(const Shape& in, const std::vector<std::size_t>& axes,
                                     Shape& out_shape) {
  const std::size_t nd = in.size();
  std::vector<std::size_t> in_stride(nd, 1);
  for (std::size_t i = nd - 1; i-- > 0;) in_stride[i] = in_stride[i + 1] * in[i + 1];
  out_shape.resize(nd);
  std::vector<std::size_t> st(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    out_shape[i] = in[axes[i]];
    st[i] = in_stride[axes[i]];
  }
  const std::size_t total = shape_numel(in);
  std::vector<std::size_t> map(total);
  std::vector<std::size_t> idx(nd, 0);
  std::size_t off = 0;
  for (std::size_t o = 0; o < total; ++o) {
    map[o] = off;
    for (std::size_t d = nd; d-- > 0;) {
      ++idx[d];
      off += st[d];
      if (idx[d] < out_shape[d]) break;
      off -= st[d] * out_shape[d];
      idx[d] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t nd = x.dim();
  std::vector<bool> seen(nd, false);
  if (axes.size() != nd) throw DimensionError("permute: axis count mismatch for " + shape_str(x.shape()));
  for (auto a : axes) {
    if (a >= nd || seen[a]) throw DimensionError("permute: invalid axis order");
    seen[a] = true;
  }
  Shape out_shape;
  auto map = permute_map(x.shape(), axes, out_shape);
  const auto& xd = x.impl()->data;
  std::vector<real> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[map[i]];
  auto ix = x.impl();
  return make_result(out_shape, std::move(out), {x}, "permute",
                     [ix, map = std::move(map)](const TensorImpl& o) {
                       if (!needs_grad(ix)) return;
                       auto& g = ix->grad_buffer();
                       for (std::size_t i = 0; i < map.size(); ++i) g[map[i]] += o.grad[i];
                     });
}

Tensor transpose(const Tensor& x) {
  if (x.dim() < 2) throw DimensionError("transpose: rank < 2");
  std::vector<std::size_t> axes(x.dim());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  const std::size_t ax = norm_axis(axis, s0.size(), "concat");
  Shape out_shape = s0;
  out_shape[ax] = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == s0[i];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
    out_shape[ax] += s[ax];
  }
  const auto split = split_at(out_shape, ax);
  std::vector<real> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& t : xs) {
    const std::size_t e = t.shape()[ax];
    const real* src = t.data().data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(src + o * e * split.inner, e * split.inner,
                  out.data() + (o * split.extent + offset) * split.inner);
    }
    offsets.push_back(offset);
    offset += e;
  }
  std::vector<std::shared_ptr<TensorImpl>> ins;
  for (const auto& t : xs) ins.push_back(t.impl());
  return make_result(out_shape, std::move(out), xs, "concat",
                     [ins, offsets, split, ax](const TensorImpl& o) {
                       for (std::size_t n = 0; n < ins.size(); ++n) {
                         if (!needs_grad(ins[n])) continue;
                         const std::size_t e = ins[n]->shape[ax];
                         auto& g = ins[n]->grad_buffer();
                         for (std::size_t q = 0; q < split.outer; ++q) {
                           const real* src = o.grad.data() + (q * split.extent + offsets[n]) * split.inner;
                           real* dst = g.data() + q * e * split.inner;
                           for (std::size_t i = 0; i < e * split.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = norm_axis(axis, x.dim(), "slice");
  if (length == 0 || start + length > x.shape()[ax]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside axis of " + shape_str(x.shape()));
  }
  const auto split = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::vector<real> out(shape_numel(out_shape));
  const real* src = x.data().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(src + (o * split.extent + start) * split.inner, length * split.inner,
                out.data() + o * length * split.inner);
  }
  auto ix = x.impl();
  return make_result(out_shape, std::move(out), {x}, "slice",
                     [ix, split, start, length](const TensorImpl& o) {
                       if (!needs_grad(ix)) return;
                       auto& g = ix->grad_buffer();
                       for (std::size_t q = 0; q < split.outer; ++q) {
                         real* dst = g.data() + (q * split.extent + start) * split.inner;
                         const real* s = o.grad.data() + q * length * split.inner;
                         for (std::size_t i = 0; i < length * split.inner; ++i) dst[i] += s[i];
                       }
                     });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (real v : x.data()) acc += v;
  auto ix = x.impl();
  return make_result(Shape{1}, {static_cast<real>(acc)}, {x}, "sum", [ix](const TensorImpl& o) {
    if (!needs_grad(ix)) return;
    for (auto& g : ix->grad_buffer()) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), real(1) / static_cast<real>(x.numel())); }

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const std::size_t ax = norm_axis(axis, x.dim(), "sum");
  const auto split = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  if (keepdim || x.dim() == 1) out_shape[ax] = 1;
  else out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<real> out(split.outer * split.inner, real(0));
  const real* src = x.data().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    real* dst = out.data() + o * split.inner;
    for (std::size_t e = 0; e < split.extent; ++e) {
      const real* s = src + (o * split.extent + e) * split.inner;
      for (std::size_t i = 0; i < split.inner; ++i) dst[i] += s[i];
    }
  }
  auto ix = x.impl();
  return make_result(out_shape, std::move(out), {x}, "sum_axis", [ix, split](const TensorImpl& o) {
    if (!needs_grad(ix)) return;
    auto& g = ix->grad_buffer();
    for (std::size_t q = 0; q < split.outer; ++q) {
      const real* s = o.grad.data() + q * split.inner;
      for (std::size_t e = 0; e < split.extent; ++e) {
        real* d = g.data() + (q * split.extent + e) * split.inner;
        for (std::size_t i = 0; i < split.inner; ++i) d[i] += s[i];
      }
    }
  });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const std::size_t ax = norm_axis(axis, x.dim(), "mean");
  return scale(sum(x, axis, keepdim), real(1) / static_cast<real>(x.shape()[ax]));
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(axis, x.dim(), "softmax");
  const auto split = split_at(x.shape(), ax);
  std::vector<real> out(x.numel());
  const real* src = x.data().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t i = 0; i < split.inner; ++i) {
      const std::size_t base = o * split.extent * split.inner + i;
      real mx = -std::numeric_limits<real>::infinity();
      for (std::size_t e = 0; e < split.extent; ++e) mx = std::max(mx, src[base + e * split.inner]);
      double z = 0;
      for (std::size_t e = 0; e < split.extent; ++e) {
        const real v = std::exp(src[base + e * split.inner] - mx);
        out[base + e * split.inner] = v;
        z += v;
      }
      const real inv = static_cast<real>(1.0 / z);
      for (std::size_t e = 0; e < split.extent; ++e) out[base + e * split.inner] *= inv;
    }
  }
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {x}, "softmax", [ix, split](const TensorImpl& o) {
    if (!needs_grad(ix)) return;
    auto& g = ix->grad_buffer();
    for (std::size_t q = 0; q < split.outer; ++q) {
      for (std::size_t i = 0; i < split.inner; ++i) {
        const std::size_t base = q * split.extent * split.inner + i;
        double dot = 0;
        for (std::size_t e = 0; e < split.extent; ++e) {
          const std::size_t k = base + e * split.inner;
          dot += static_cast<double>(o.grad[k]) * o.data[k];
        }
        for (std::size_t e = 0; e < split.extent; ++e) {
          const std::size_t k = base + e * split.inner;
          g[k] += o.data[k] * (o.grad[k] - static_cast<real>(dot));
        }
      }
    }
  });
}

Tensor detach(const Tensor& x) { return x.clone(); }

Tensor window_mean(const Tensor& x, int axis, std::size_t k) {
  const std::size_t ax = norm_axis(axis, x.dim(), "window_mean");
  const auto split = split_at(x.shape(), ax);
  const std::size_t T = split.extent;
  const real inv = real(1) / static_cast<real>(2 * k + 1);
  auto clamp_idx = [T](std::ptrdiff_t t) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, static_cast<std::ptrdiff_t>(T) - 1));
  };
  std::vector<real> out(x.numel(), real(0));
  const real* src = x.data().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    const std::size_t base = o * T * split.inner;
    for (std::size_t t = 0; t < T; ++t) {
      // center + mean of deviations: exact on constant and linear signals
      real* dst = out.data() + base + t * split.inner;
      const real* c = src + base + t * split.inner;
      for (std::ptrdiff_t d = -static_cast<std::ptrdiff_t>(k); d <= static_cast<std::ptrdiff_t>(k); ++d) {
        const real* s = src + base + clamp_idx(static_cast<std::ptrdiff_t>(t) + d) * split.inner;
        for (std::size_t i = 0; i < split.inner; ++i) dst[i] += s[i] - c[i];
      }
      for (std::size_t i = 0; i < split.inner; ++i) dst[i] = c[i] + dst[i] * inv;
    }
  }
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {x}, "window_mean",
                     [ix, split, k, inv, clamp_idx](const TensorImpl& o) {
                       if (!needs_grad(ix)) return;
                       auto& g = ix->grad_buffer();
                       const std::size_t T = split.extent;
                       for (std::size_t q = 0; q < split.outer; ++q) {
                         const std::size_t base = q * T * split.inner;
                         for (std::size_t t = 0; t < T; ++t) {
                           const real* s = o.grad.data() + base + t * split.inner;
                           for (std::ptrdiff_t d = -static_cast<std::ptrdiff_t>(k);
                                d <= static_cast<std::ptrdiff_t>(k); ++d) {
                             real* dst = g.data() + base +
                                         clamp_idx(static_cast<std::ptrdiff_t>(t) + d) * split.inner;
                             for (std::size_t i = 0; i < split.inner; ++i) dst[i] += s[i] * inv;
                           }
                         }
                       }
                     });
}

Tensor window_difference(const Tensor& x, int axis, std::size_t k) {
  const std::size_t ax = norm_axis(axis, x.dim(), "window_difference");
  const auto split = split_at(x.shape(), ax);
  const std::size_t T = split.extent;
  const real inv = real(1) / static_cast<real>(2 * k + 1);
  const auto K = static_cast<std::ptrdiff_t>(k);
  auto clamp_idx = [T](std::ptrdiff_t t) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, static_cast<std::ptrdiff_t>(T) - 1));
  };
  std::vector<real> out(x.numel(), real(0));
  const real* src = x.data().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    const std::size_t base = o * T * split.inner;
    for (std::size_t t = 0; t < T; ++t) {
      real* dst = out.data() + base + t * split.inner;
      const real* c = src + base + t * split.inner;
      for (std::ptrdiff_t d = -K; d <= K; ++d) {
        const real* s = src + base + clamp_idx(static_cast<std::ptrdiff_t>(t) + d) * split.inner;
        for (std::size_t i = 0; i < split.inner; ++i) dst[i] += s[i] - c[i];
      }
      for (std::size_t i = 0; i < split.inner; ++i) dst[i] = -(dst[i] * inv);
    }
  }
  auto ix = x.impl();
  return make_result(x.shape(), std::move(out), {x}, "window_difference",
                     [ix, split, K, inv, clamp_idx](const TensorImpl& o) {
                       if (!needs_grad(ix)) return;
                       auto& g = ix->grad_buffer();
                       const std::size_t T = split.extent;
                       for (std::size_t q = 0; q < split.outer; ++q) {
                         const std::size_t base = q * T * split.inner;
                         for (std::size_t t = 0; t < T; ++t) {
                           const real* s = o.grad.data() + base + t * split.inner;
                           real* self = g.data() + base + t * split.inner;
                           for (std::size_t i = 0; i < split.inner; ++i) self[i] += s[i];
                           for (std::ptrdiff_t d = -K; d <= K; ++d) {
                             real* dst = g.data() + base + clamp_idx(static_cast<std::ptrdiff_t>(t) + d) * split.inner;
                             for (std::size_t i = 0; i < split.inner; ++i) dst[i] -= s[i] * inv;
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// convolution and pooling

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t padding) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 3 || xs[1] != ws[1]) {
    throw DimensionError("conv1d: input " + shape_str(xs) + " incompatible with kernel " + shape_str(ws));
  }
  if (stride == 0) throw DimensionError("conv1d: stride must be >= 1");
  const std::size_t B = xs[0], Cin = xs[1], L = xs[2], Cout = ws[0], K = ws[2];
  if (K > L + 2 * padding) {
    throw DimensionError("conv1d: kernel " + std::to_string(K) + " larger than padded input " +
                         std::to_string(L + 2 * padding));
  }
  if (b.defined() && (b.dim() != 1 || b.shape()[0] != Cout)) {
    throw DimensionError("conv1d: bias " + shape_str(b.shape()) + " does not match C_out " + std::to_string(Cout));
  }
  const std::size_t Lout = (L + 2 * padding - K) / stride + 1;
  const std::size_t CK = Cin * K, NL = B * Lout;
  // cols: [Cin*K, B*Lout]
  std::vector<real> cols(CK * NL, real(0));
  const real* px = x.data().data();
  for (std::size_t c = 0; c < Cin; ++c) {
    for (std::size_t kk = 0; kk < K; ++kk) {
      real* row = cols.data() + (c * K + kk) * NL;
      for (std::size_t bi = 0; bi < B; ++bi) {
        const real* xr = px + (bi * Cin + c) * L;
        for (std::size_t t = 0; t < Lout; ++t) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(padding);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) row[bi * Lout + t] = xr[pos];
        }
      }
    }
  }
  std::vector<real> tmp(Cout * NL, real(0));
  kernels::gemm_nn(Cout, NL, CK, w.data().data(), cols.data(), tmp.data());
  std::vector<real> out(B * Cout * Lout);
  for (std::size_t co = 0; co < Cout; ++co) {
    const real bias = b.defined() ? b.data()[co] : real(0);
    for (std::size_t bi = 0; bi < B; ++bi) {
      const real* s = tmp.data() + co * NL + bi * Lout;
      real* d = out.data() + (bi * Cout + co) * Lout;
      for (std::size_t t = 0; t < Lout; ++t) d[t] = s[t] + bias;
    }
  }
  auto ix = x.impl(), iw = w.impl();
  std::shared_ptr<TensorImpl> ib = b.defined() ? b.impl() : nullptr;
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(
      Shape{B, Cout, Lout}, std::move(out), inputs, "conv1d",
      [ix, iw, ib, cols = std::move(cols), B, Cin, L, Cout, K, Lout, stride, padding](const TensorImpl& o) {
        const std::size_t CK = Cin * K, NL = B * Lout;
        std::vector<real> g(Cout * NL);
        for (std::size_t co = 0; co < Cout; ++co)
          for (std::size_t bi = 0; bi < B; ++bi)
            std::copy_n(o.grad.data() + (bi * Cout + co) * Lout, Lout, g.data() + co * NL + bi * Lout);
        if (needs_grad(ib)) {
          auto& gb = ib->grad_buffer();
          for (std::size_t co = 0; co < Cout; ++co) {
            double acc = 0;
            for (std::size_t j = 0; j < NL; ++j) acc += g[co * NL + j];
            gb[co] += static_cast<real>(acc);
          }
        }
        if (needs_grad(iw)) kernels::gemm_nt(Cout, CK, NL, g.data(), cols.data(), iw->grad_buffer().data());
        if (needs_grad(ix)) {
          std::vector<real> dcols(CK * NL, real(0));
          kernels::gemm_tn(CK, NL, Cout, iw->data.data(), g.data(), dcols.data());
          auto& gx = ix->grad_buffer();
          for (std::size_t c = 0; c < Cin; ++c) {
            for (std::size_t kk = 0; kk < K; ++kk) {
              const real* row = dcols.data() + (c * K + kk) * NL;
              for (std::size_t bi = 0; bi < B; ++bi) {
                real* xr = gx.data() + (bi * Cin + c) * L;
                for (std::size_t t = 0; t < Lout; ++t) {
                  const std::ptrdiff_t pos =
                      static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(padding);
                  if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(L)) xr[pos] += row[bi * Lout + t];
                }
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t padding) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1]) {
    throw DimensionError("conv2d: input " + shape_str(xs) + " incompatible with kernel " + shape_str(ws));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");
  const std::size_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
  const std::size_t Cout = ws[0], KH = ws[2], KW = ws[3];
  if (KH > H + 2 * padding || KW > W + 2 * padding) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  if (b.defined() && (b.dim() != 1 || b.shape()[0] != Cout)) {
    throw DimensionError("conv2d: bias does not match C_out");
  }
  const std::size_t Ho = (H + 2 * padding - KH) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - KW) / stride + 1;
  const std::size_t CK = Cin * KH * KW, P = Ho * Wo, NP = B * P;
  auto for_each_tap = [=](auto&& f) {
    for (std::size_t c = 0; c < Cin; ++c)
      for (std::size_t ky = 0; ky < KH; ++ky)
        for (std::size_t kx = 0; kx < KW; ++kx) {
          const std::size_t r = (c * KH + ky) * KW + kx;
          for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t ox = 0; ox < Wo; ++ox) {
                const std::ptrdiff_t ixx = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                if (ixx < 0 || ixx >= static_cast<std::ptrdiff_t>(W)) continue;
                f(r * NP + bi * P + oy * Wo + ox,
                  ((bi * Cin + c) * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ixx));
              }
            }
        }
  };
  std::vector<real> cols(CK * NP, real(0));
  const real* px = x.data().data();
  for_each_tap([&](std::size_t ci, std::size_t xi) { cols[ci] = px[xi]; });
  std::vector<real> tmp(Cout * NP, real(0));
  kernels::gemm_nn(Cout, NP, CK, w.data().data(), cols.data(), tmp.data());
  std::vector<real> out(B * Cout * P);
  for (std::size_t co = 0; co < Cout; ++co) {
    const real bias = b.defined() ? b.data()[co] : real(0);
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t p = 0; p < P; ++p) out[(bi * Cout + co) * P + p] = tmp[co * NP + bi * P + p] + bias;
  }
  auto ix = x.impl(), iw = w.impl();
  std::shared_ptr<TensorImpl> ib = b.defined() ? b.impl() : nullptr;
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_result(Shape{B, Cout, Ho, Wo}, std::move(out), inputs, "conv2d",
                     [ix, iw, ib, cols = std::move(cols), B, Cout, CK, P, NP, for_each_tap](const TensorImpl& o) {
                       std::vector<real> g(Cout * NP);
                       for (std::size_t co = 0; co < Cout; ++co)
                         for (std::size_t bi = 0; bi < B; ++bi)
                           std::copy_n(o.grad.data() + (bi * Cout + co) * P, P, g.data() + co * NP + bi * P);
                       if (needs_grad(ib)) {
                         auto& gb = ib->grad_buffer();
                         for (std::size_t co = 0; co < Cout; ++co) {
                           double acc = 0;
                           for (std::size_t j = 0; j < NP; ++j) acc += g[co * NP + j];
                           gb[co] += static_cast<real>(acc);
                         }
                       }
                       if (needs_grad(iw)) kernels::gemm_nt(Cout, CK, NP, g.data(), cols.data(), iw->grad_buffer().data());
                       if (needs_grad(ix)) {
                         std::vector<real> dcols(CK * NP, real(0));
                         kernels::gemm_tn(CK, NP, Cout, iw->data.data(), g.data(), dcols.data());
                         auto& gx = ix->grad_buffer();
                         for_each_tap([&](std::size_t ci, std::size_t xi) { gx[xi] += dcols[ci]; });
                       }
                     });
}

Tensor maxpool1d(const Tensor& x, std::size_t window, std::size_t stride) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw DimensionError("maxpool1d: expected [B, C, L], got " + shape_str(xs));
  if (window == 0 || stride == 0) throw DimensionError("maxpool1d: window and stride must be >= 1");
  const std::size_t rows = xs[0] * xs[1], L = xs[2];
  if (window > L) {
    throw DimensionError("maxpool1d: window " + std::to_string(window) + " exceeds length " + std::to_string(L));
  }
  const std::size_t Lout = (L - window) / stride + 1;
  std::vector<real> out(rows * Lout);
  std::vector<std::size_t> arg(rows * Lout);
  const real* src = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < Lout; ++t) {
      std::size_t best = r * L + t * stride;
      for (std::size_t j = 1; j < window; ++j) {
        const std::size_t k = r * L + t * stride + j;
        if (src[k] > src[best]) best = k;
      }
      out[r * Lout + t] = src[best];
      arg[r * Lout + t] = best;
    }
  }
  if (auto* bt = BranchTrace::active()) {
    for (std::size_t a : arg) bt->mix(a);
  }
  auto ix = x.impl();
  return make_result(Shape{xs[0], xs[1], Lout}, std::move(out), {x}, "maxpool1d",
                     [ix, arg = std::move(arg)](const TensorImpl& o) {
                       if (!needs_grad(ix)) return;
                       auto& g = ix->grad_buffer();
                       for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += o.grad[i];
                     });
}

// ---------------------------------------------------------------------------
// normalization

BatchNormState BatchNormState::create(std::size_t channels) {
  BatchNormState s;
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::ones({channels});
  return s;
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 Mode mode) {
  const Shape& xs = x.shape();
  if (xs.size() != 2 && xs.size() != 3) throw DimensionError("batchnorm: expected [B, C] or [B, C, L], got " + shape_str(xs));
  const std::size_t B = xs[0], C = xs[1], L = xs.size() == 3 ? xs[2] : 1;
  if (gamma.numel() != C || beta.numel() != C || state.running_mean.numel() != C) {
    throw DimensionError("batchnorm: parameter size does not match " + std::to_string(C) + " channels");
  }
  const std::size_t count = B * L;
  std::vector<real> mean_c(C), inv_std(C);
  const real* px = x.data().data();
  if (mode == Mode::train) {
    if (B < 2) throw ContractError("batchnorm: train mode requires batch extent >= 2");
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0, s2 = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const real* r = px + (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) s += r[t];
      }
      const double m = s / static_cast<double>(count);
      for (std::size_t b = 0; b < B; ++b) {
        const real* r = px + (b * C + c) * L;
        for (std::size_t t = 0; t < L; ++t) s2 += (r[t] - m) * (r[t] - m);
      }
      const double var = s2 / static_cast<double>(count);
      mean_c[c] = static_cast<real>(m);
      inv_std[c] = static_cast<real>(1.0 / std::sqrt(var + state.eps));
      const double unbiased = count > 1 ? s2 / static_cast<double>(count - 1) : var;
      rm[c] = static_cast<real>((1 - state.momentum) * rm[c] + state.momentum * m);
      rv[c] = static_cast<real>((1 - state.momentum) * rv[c] + state.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean_c[c] = state.running_mean.data()[c];
      inv_std[c] = static_cast<real>(1.0 / std::sqrt(static_cast<double>(state.running_var.data()[c]) + state.eps));
    }
  }
  std::vector<real> xhat(x.numel()), out(x.numel());
  const real* pg = gamma.data().data();
  const real* pb = beta.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * L;
      for (std::size_t t = 0; t < L; ++t) {
        xhat[base + t] = (px[base + t] - mean_c[c]) * inv_std[c];
        out[base + t] = pg[c] * xhat[base + t] + pb[c];
      }
    }
  auto ix = x.impl(), ig = gamma.impl(), ibt = beta.impl();
  const bool batch_stats = mode == Mode::train;
  return make_result(xs, std::move(out), {x, gamma, beta}, "batchnorm",
                     [ix, ig, ibt, xhat = std::move(xhat), inv_std, B, C, L, batch_stats](const TensorImpl& o) {
                       const real* g = o.grad.data();
                       std::vector<double> sg(C, 0), sgx(C, 0);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t c = 0; c < C; ++c) {
                           const std::size_t base = (b * C + c) * L;
                           for (std::size_t t = 0; t < L; ++t) {
                             sg[c] += g[base + t];
                             sgx[c] += static_cast<double>(g[base + t]) * xhat[base + t];
                           }
                         }
                       if (needs_grad(ig)) {
                         auto& gg = ig->grad_buffer();
                         for (std::size_t c = 0; c < C; ++c) gg[c] += static_cast<real>(sgx[c]);
                       }
                       if (needs_grad(ibt)) {
                         auto& gb = ibt->grad_buffer();
                         for (std::size_t c = 0; c < C; ++c) gb[c] += static_cast<real>(sg[c]);
                       }
                       if (!needs_grad(ix)) return;
                       auto& gx = ix->grad_buffer();
                       const real* pg = ig->data.data();
                       const double n = static_cast<double>(B * L);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t c = 0; c < C; ++c) {
                           const std::size_t base = (b * C + c) * L;
                           const double k = pg[c] * inv_std[c];
                           for (std::size_t t = 0; t < L; ++t) {
                             if (batch_stats) {
                               gx[base + t] += static_cast<real>(
                                   k * (g[base + t] - sg[c] / n - xhat[base + t] * sgx[c] / n));
                             } else {
                               gx[base + t] += static_cast<real>(k * g[base + t]);
                             }
                           }
                         }
                     });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
  const std::size_t D = x.shape().back();
  if (gamma.numel() != D || beta.numel() != D) {
    throw DimensionError("layernorm: parameter size does not match last axis " + std::to_string(D));
  }
  const std::size_t rows = x.numel() / D;
  std::vector<real> xhat(x.numel()), out(x.numel()), inv_std(rows);
  const real* px = x.data().data();
  const real* pg = gamma.data().data();
  const real* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const real* s = px + r * D;
    double m = 0, v = 0;
    for (std::size_t i = 0; i < D; ++i) m += s[i];
    m /= static_cast<double>(D);
    for (std::size_t i = 0; i < D; ++i) v += (s[i] - m) * (s[i] - m);
    v /= static_cast<double>(D);
    inv_std[r] = static_cast<real>(1.0 / std::sqrt(v + eps));
    for (std::size_t i = 0; i < D; ++i) {
      xhat[r * D + i] = static_cast<real>((s[i] - m) * inv_std[r]);
      out[r * D + i] = pg[i] * xhat[r * D + i] + pb[i];
    }
  }
  auto ix = x.impl(), ig = gamma.impl(), ib = beta.impl();
  return make_result(x.shape(), std::move(out), {x, gamma, beta}, "layernorm",
                     [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std), D, rows](const TensorImpl& o) {
                       const real* g = o.grad.data();
                       if (needs_grad(ig)) {
                         auto& gg = ig->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < D; ++i) gg[i] += g[r * D + i] * xhat[r * D + i];
                       }
                       if (needs_grad(ib)) {
                         auto& gb = ib->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < D; ++i) gb[i] += g[r * D + i];
                       }
                       if (!needs_grad(ix)) return;
                       auto& gx = ix->grad_buffer();
                       const real* pg = ig->data.data();
                       for (std::size_t r = 0; r < rows; ++r) {
                         double s1 = 0, s2 = 0;
                         for (std::size_t i = 0; i < D; ++i) {
                           const double dxh = static_cast<double>(g[r * D + i]) * pg[i];
                           s1 += dxh;
                           s2 += dxh * xhat[r * D + i];
                         }
                         const double n = static_cast<double>(D);
                         for (std::size_t i = 0; i < D; ++i) {
                           const double dxh = static_cast<double>(g[r * D + i]) * pg[i];
                           gx[r * D + i] += static_cast<real>(inv_std[r] * (dxh - s1 / n - xhat[r * D + i] * s2 / n));
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, real p, Mode mode, std::uint64_t seed) {
  if (!(p >= 0 && p < 1)) throw ContractError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::eval || p == 0) return x;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  const real s = real(1) / (real(1) - p);
  std::vector<real> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? s : real(0);
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

// ---------------------------------------------------------------------------
// losses

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ContractError("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t rows = a.dim() >= 2 ? a.shape()[0] : 1;
  const real* pa = a.data().data();
  const real* pb = b.data().data();
  double acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    acc += d * d;
  }
  const real value = static_cast<real>(acc / static_cast<double>(rows));
  auto ia = a.impl(), ib = b.impl();
  return make_result(Shape{1}, {value}, {a, b}, "mse", [ia, ib, rows](const TensorImpl& o) {
    const real k = real(2) * o.grad[0] / static_cast<real>(rows);
    const std::size_t n = ia->data.size();
    if (needs_grad(ia)) {
      auto& g = ia->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (ia->data[i] - ib->data[i]);
    }
    if (needs_grad(ib)) {
      auto& g = ib->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (ia->data[i] - ib->data[i]);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t C = logits.shape().back();
  const std::size_t B = logits.numel() / C;
  if (logits.dim() > 2) throw DimensionError("cross_entropy: expected [B, C] logits, got " + shape_str(logits.shape()));
  if (labels.size() != B) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(B));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw LabelRangeError("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
    }
  }
  std::vector<real> prob(B * C);
  double loss = 0;
  const real* px = logits.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    const real* r = px + b * C;
    const real mx = *std::max_element(r, r + C);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(r[c] - mx));
    for (std::size_t c = 0; c < C; ++c) prob[b * C + c] = static_cast<real>(std::exp(static_cast<double>(r[c] - mx)) / z);
    loss += std::log(z) - static_cast<double>(r[labels[b]] - mx);
  }
  auto il = logits.impl();
  return make_result(Shape{1}, {static_cast<real>(loss / static_cast<double>(B))}, {logits}, "cross_entropy",
                     [il, prob = std::move(prob), labels, B, C](const TensorImpl& o) {
                       if (!needs_grad(il)) return;
                       auto& g = il->grad_buffer();
                       const real k = o.grad[0] / static_cast<real>(B);
                       for (std::size_t b = 0; b < B; ++b)
                         for (std::size_t c = 0; c < C; ++c) {
                           const real target = static_cast<std::size_t>(labels[b]) == c ? real(1) : real(0);
                           g[b * C + c] += k * (prob[b * C + c] - target);
                         }
                     });
}

PTGNN_NAMESPACE_END
