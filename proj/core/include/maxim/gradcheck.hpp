#pragma once

#include <functional>
#include <span>
#include <vector>

#include "maxim/ops.hpp"
#include "maxim/params.hpp"

namespace maxim {

/// Scalar-valued function of n tensors, evaluated on (possibly watched) inputs.
using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Central finite differences against the analytic gradient, per coordinate.
/// Inputs must be f64. Returns max over all coordinates of
/// |g_fd - g_ad| / max(1e-8, |g_fd| + |g_ad|).
double grad_check(const ScalarFn& f, std::span<const Tensor> inputs, double h = 1e-5);

/// Convenience: finite-difference check of a scalar loss w.r.t. selected
/// parameters of a store (used by the block-level suites).
double grad_check_params(const std::function<Tensor(Session&)>& loss_fn, ParamStore& store,
                         double h = 1e-5, int max_coords_per_param = -1);

}  // namespace maxim
