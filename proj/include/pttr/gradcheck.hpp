#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "pttr/nn.hpp"

namespace pttr {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  std::size_t coordinates = 0;
  bool passed = true;
};

/// Loss callback for grad_check. When `with_grad` is true it must also
/// accumulate the analytic gradient into the parameters' `grad` (grads are
/// zeroed beforehand).
using LossFn = std::function<double(bool with_grad)>;

/// Central-difference check of every coordinate of `params`. Error per
/// coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check(const LossFn& fn, const ParameterList<double>& params,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace pttr
