#include "ptgnn/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

PTGNN_NAMESPACE_BEGIN

namespace {

struct Sample {
  double value;
  std::uint64_t branches;
};

Sample eval_scalar(const std::function<Tensor()>& loss_fn, const std::string& what) {
  BranchTrace trace;
  const Tensor loss = loss_fn();
  if (loss.numel() != 1) throw ContractError("grad_check: loss must be scalar");
  const double v = loss.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss at " + what);
  return {v, trace.fingerprint()};
}

// Slope g of the least-squares fit d = g t + c t^3.
double odd_cubic_slope(const std::vector<double>& t, const std::vector<double>& d) {
  double s2 = 0, s4 = 0, s6 = 0, b1 = 0, b3 = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double t2 = t[i] * t[i];
    s2 += t2;
    s4 += t2 * t2;
    s6 += t2 * t2 * t2;
    b1 += t[i] * d[i];
    b3 += t2 * t[i] * d[i];
  }
  return (b1 * s6 - b3 * s4) / (s2 * s6 - s4 * s4);
}

}  // namespace

std::vector<std::vector<double>> analytic_gradients(const std::function<Tensor()>& loss_fn,
                                                    const std::vector<NamedTensor>& params) {
  std::vector<Tensor> ps;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
    ps.push_back(t);
  }
  {
    Tape tape;
    Tensor loss;
    {
      auto rec = tape.record();
      loss = loss_fn();
    }
    if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("grad_check: non-finite loss");
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : ps) {
    analytic.emplace_back(t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0));
  }
  return analytic;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<NamedTensor>& params, const GradCheckOptions& opt) {
  return compare_gradients(loss_fn, params, analytic_gradients(loss_fn, params), opt);
}

GradCheckReport compare_gradients(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                                  const std::vector<std::vector<double>>& analytic, const GradCheckOptions& opt) {
  if (analytic.size() != params.size()) throw ContractError("compare_gradients: one gradient per tensor expected");
  std::vector<Tensor> ps;
  for (std::size_t n = 0; n < params.size(); ++n) {
    if (analytic[n].size() != params[n].tensor.numel()) {
      throw ContractError("compare_gradients: gradient of '" + params[n].name + "' has the wrong size");
    }
    ps.push_back(params[n].tensor);
  }
  GradCheckReport rep;
  const Sample base = eval_scalar(loss_fn, "base point");
  double floor_step = 0;
  if (opt.rounding_floor) {
    const real l = static_cast<real>(base.value);
    const double ulp = std::nextafter(l, std::numeric_limits<real>::infinity()) - l;
    // Up to 1.5 ulp of rounding per evaluation; Richardson weights (4, 1/2)/3
    // turn that into at most 2.25 ulp / h in the derivative.
    floor_step = 2.25 * ulp / opt.tol;
  }
  for (std::size_t n = 0; n < ps.size(); ++n) {
    auto data = ps[n].data();
    const std::string& name = params[n].name;
    const std::size_t total = data.size();
    std::size_t stride = 1;
    if (opt.max_entries_per_tensor > 0 && total > opt.max_entries_per_tensor) {
      stride = (total + opt.max_entries_per_tensor - 1) / opt.max_entries_per_tensor;
    }
    for (std::size_t i = 0; i < total; i += stride) {
      const real orig = data[i];
      // Offsets are the steps actually representable at this precision.
      auto at = [&](double h, double& offset) {
        data[i] = static_cast<real>(orig + h);
        offset = static_cast<double>(data[i]) - orig;
        const Sample s = eval_scalar(loss_fn, name);
        data[i] = orig;
        return s;
      };
      const double a = analytic[n][i];
      auto rel = [a](double num) { return std::abs(a - num) / std::max({1.0, std::abs(a), std::abs(num)}); };
      // Steps eps, eps/2, ...: a stencil counts only if it stays inside the
      // smooth piece of the base point. Halving continues while the estimate
      // misses `tol`, and the closest estimate is kept (adaptive step choice,
      // as in Ridders' method; a wrong gradient misses at every step).
      double numeric = 0, fwd = 0, bwd = 0, best = std::numeric_limits<double>::infinity();
      bool ok = false, floor_only = false;
      auto consider = [&](double est) {
        ok = true;
        if (rel(est) < best) {
          best = rel(est);
          numeric = est;
        }
      };
      for (int level = 0; level <= opt.max_halvings && best > opt.tol; ++level) {
        const double h = opt.eps / static_cast<double>(1 << level);
        const bool trusted = level == 0 || h >= floor_step;
        double up, dn;
        const Sample fp = at(h, up), fm = at(-h, dn);
        const bool smooth_up = fp.branches == base.branches, smooth_dn = fm.branches == base.branches;
        if (level == 0) {
          fwd = (fp.value - base.value) / up;
          bwd = (base.value - fm.value) / -dn;
        }
        if (!trusted) {
          // below the floor a stencil only tells us the point is near a kink
          floor_only |= smooth_up || smooth_dn;
          continue;
        }
        if (smooth_up && smooth_dn) {
          const double central = (fp.value - fm.value) / (up - dn);
          consider(central);
          if (opt.fit_points > 0 && rel(central) > opt.tol) {
            // Least-squares fit of g*t + c*t^3 to the odd part of f on a
            // grid inside [-h, h]; averages rounding noise over the grid.
            std::vector<double> ts{up}, ds{(fp.value - fm.value) / 2};
            bool smooth = true;
            for (int j = 1; j < opt.fit_points && smooth; ++j) {
              const double t = h * j / opt.fit_points;
              double tu, td;
              const Sample a1 = at(t, tu), a2 = at(-t, td);
              smooth = a1.branches == base.branches && a2.branches == base.branches;
              ts.push_back((tu - td) / 2);
              ds.push_back((a1.value - a2.value) / 2);
            }
            if (smooth) consider(odd_cubic_slope(ts, ds));
          }
          if (opt.richardson && rel(central) > opt.tol) {
            double up2, dn2;
            const Sample fp2 = at(2 * h, up2), fm2 = at(-2 * h, dn2);
            if (fp2.branches == base.branches && fm2.branches == base.branches) {
              const double wide = (fp2.value - fm2.value) / (up2 - dn2);
              consider((4 * central - wide) / 3);
            }
          }
        } else if (smooth_up || smooth_dn) {
          // Second-order one-sided difference: the quadratic through
          // (0, f0), (h1, f1), (h2, f2), differentiated at 0.
          const Sample f1 = smooth_up ? fp : fm;
          const double h1 = smooth_up ? up : dn;
          double h2;
          const Sample f2 = at(smooth_up ? 2 * h : -2 * h, h2);
          if (f2.branches == base.branches) {
            consider((f1.value - base.value) * h2 / (h1 * (h2 - h1)) -
                     (f2.value - base.value) * h1 / (h2 * (h2 - h1)));
          }
        }
      }
      ++rep.checked;
      if (!ok) {
        rep.excluded.push_back({name, i, fwd, bwd, a, floor_only});
        continue;
      }
      const double err = rel(numeric);
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_tensor = name;
        rep.worst_index = i;
      }
    }
  }
  // a check in which every entry was excluded compared nothing
  rep.passed = rep.max_rel_error <= opt.tol && rep.excluded.size() < rep.checked;
  return rep;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                           const GradCheckOptions& opt) {
  return grad_check([&] { return f(x); }, {{"x", x}}, opt);
}

PTGNN_NAMESPACE_END
