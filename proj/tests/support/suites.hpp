#pragma once

// Check suites shared by the unit tests, the acceptance run and `pttr check`.

#include <cstdint>
#include <string>
#include <vector>

#include "pttr/config.hpp"
#include "pttr/gradcheck.hpp"

namespace oracle {

struct CheckResult {
  std::string name;
  double value = 0.0;  // worst error or mismatch count
  double limit = 0.0;  // passes when value < limit
  double seconds = 0.0;
  bool passed() const { return value < limit; }
};

/// Two-dozen-point model with every stage enabled; small enough that a full
/// central-difference sweep over all parameters takes about a second.
pttr::ModelConfig gradcheck_model();

/// Full model plus total_loss (lambda 0.7) at 64-bit, sampler choices and the
/// coarse motion frozen after one forward so the loss is smooth in the parameters.
pttr::GradCheckResult full_model_grad_check(const pttr::ModelConfig& cfg, std::uint64_t seed,
                                            double h = 1e-5);

/// Central-difference checks of every differentiable operation and of the
/// composed model in its ablation variants. Limit 1e-4 each.
std::vector<CheckResult> gradient_suite();

/// Sampler, ball-query, pooling and IoU implementations against the
/// brute-force oracles. `iou_samples` sets the Monte-Carlo budget per box pair.
std::vector<CheckResult> sampling_oracle_suite();
std::vector<CheckResult> geometry_oracle_suite(std::size_t iou_samples = 1'000'000);

}  // namespace oracle
