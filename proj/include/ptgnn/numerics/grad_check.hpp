#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ptgnn/numerics/tensor.hpp"

PTGNN_NAMESPACE_BEGIN

struct GradCheckOptions {
  double eps = 1e-3;
  double tol = 1e-3;
  /// Check at most this many entries per tensor (evenly strided); 0 = all.
  std::size_t max_entries_per_tensor = 0;
  /// When a central difference misses `tol`, also fit the odd part of the
  /// loss on this many kink-free points per side (0 disables).
  int fit_points = 8;
  /// Combine steps eps and 2*eps to cancel the second-order truncation term.
  bool richardson = true;
  /// How often the step may be halved to fit between kinks.
  int max_halvings = 4;
  /// Skip halved steps below 2.25 ulp(loss) / tol, where rounding of the loss
  /// value alone can exceed the tolerance. `eps` itself is always tried.
  bool rounding_floor = true;
};

struct ExcludedPoint {
  std::string tensor;
  std::size_t index = 0;
  double forward_slope = 0, backward_slope = 0, analytic = 0;
  /// A kink-free stencil existed, but only below the rounding floor.
  bool below_floor = false;
};

/// Relative error is |analytic - numeric| / max(1, |analytic|, |numeric|).
///
/// Every evaluation runs under a BranchTrace. When both perturbed points stay
/// in the branch pattern of the base point the numeric value is the central
/// difference (refined by Richardson extrapolation if it misses `tol`). When
/// only one side changed pattern, a second-order one-sided difference on the
/// other side is used. While no estimate meets `tol` the step is halved
/// (down to eps / 2^max_halvings) and the closest estimate is kept. Entries
/// with no kink-free stencil at any usable step are listed as excluded and do
/// not count toward the error.
struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::vector<ExcludedPoint> excluded;
  bool passed = false;
};

/// Checks d loss / d params. `loss_fn` must be deterministic and must build
/// its graph from the current contents of `params`.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<NamedTensor>& params, const GradCheckOptions& opt);

/// d loss / d params by reverse mode, one vector per tensor.
std::vector<std::vector<double>> analytic_gradients(const std::function<Tensor()>& loss_fn,
                                                    const std::vector<NamedTensor>& params);

/// The finite-difference half of grad_check against gradients computed
/// elsewhere, for instance by a lower-precision build at the same point.
GradCheckReport compare_gradients(const std::function<Tensor()>& loss_fn, const std::vector<NamedTensor>& params,
                                  const std::vector<std::vector<double>>& analytic, const GradCheckOptions& opt);

/// Single-input form: checks d f(x) / d x.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                           const GradCheckOptions& opt);

PTGNN_NAMESPACE_END
