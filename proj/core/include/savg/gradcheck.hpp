#pragma once

#include <functional>
#include <vector>

#include "savg/tensor.hpp"

namespace savg::nn {

// Central-difference check of reverse-mode gradients. `f` must rebuild the
// scalar loss from the current values of the checked tensors, which all need
// requires_grad set. Returns max over coordinates of
//   |analytic - cd| / max(|analytic|, |cd|, 1e-8).
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt,
                  double eps = 1e-5);

// Same, over a store's non-frozen parameters.
double grad_check(const std::function<Tensor()>& f, ParamStore& store, double eps = 1e-5);

}  // namespace savg::nn
