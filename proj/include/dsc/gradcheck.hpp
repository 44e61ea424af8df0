#pragma once

#include <cmath>
#include <cstddef>

#include "dsc/common.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

/// Central-difference gradient of a scalar-valued function, one coordinate at
/// a time: (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). This is the
/// verification oracle for every analytic backward pass; it must never share
/// code with the passes it checks. Use 64-bit tensors.
template <class F>
Tensor<double> finite_diff_grad(F&& f, const Tensor<double>& x, double eps = 1e-5) {
  Tensor<double> grad(x.shape());
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double hi = f(probe);
    probe[i] = saved - eps;
    const double lo = f(probe);
    probe[i] = saved;
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw NumericError("finite_diff_grad: non-finite function value");
    }
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

/// |a - f| / max(1, |a|, |f|), the usual gradient-check error measure.
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max(1.0, std::max(std::abs(analytic), std::abs(numeric)));
  return std::abs(analytic - numeric) / denom;
}

/// Worst relative error over all coordinates of two same-shaped gradients.
inline double max_relative_error(const Tensor<double>& analytic,
                                 const Tensor<double>& numeric) {
  if (!analytic.same_shape(numeric)) {
    throw DimensionError("max_relative_error: shape mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  }
  return worst;
}

}  // namespace dsc
