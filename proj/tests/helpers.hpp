#pragma once

#include <cstddef>
#include <vector>

#include "dsc/common.hpp"
#include "dsc/tensor.hpp"

namespace dsc::test {

inline Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Pushes values that sit within `margin` of zero away from it, so central
/// differences stay valid around relu/maxpool kinks.
inline void nudge_from_zero(Tensor<double>& t, double margin = 1e-3) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= 0.0 && t[i] < margin) t[i] += margin;
    if (t[i] < 0.0 && t[i] > -margin) t[i] -= margin;
  }
}

}  // namespace dsc::test
