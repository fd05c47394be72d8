#include "pttr/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace pttr {

GradCheckResult grad_check(const LossFn& fn, const ParameterList<double>& params, double h,
                           double tol) {
  zero_grads(params);
  fn(true);
  std::vector<MatrixD> analytic;
  analytic.reserve(params.size());
  for (const auto* p : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double plus = fn(false);
      x = saved - h;
      const double minus = fn(false);
      x = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err =
          std::abs(analytic[k].data()[i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (!(err <= result.max_rel_error)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst_parameter = p->name;
        result.worst_index = i;
      }
    }
  }
  result.passed = result.max_rel_error < tol;
  return result;
}

}  // namespace pttr
