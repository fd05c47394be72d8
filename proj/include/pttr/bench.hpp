#pragma once

#include <cstdint>
#include <string>

#include "pttr/config.hpp"
#include "pttr/model.hpp"

namespace pttr {

struct BenchReport {
  int iterations = 0;
  int search_points = 0;
  int template_points = 0;
  StageTimes mean_stage;  // per forward pass
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double max_ms = 0.0;
};

/// Times single-threaded 32-bit eval forward passes of a freshly initialized
/// network on a synthetic template/search pair (one untimed warm-up pass).
BenchReport bench_forward(const TrainConfig& cfg, int iterations, std::uint64_t seed);

std::string format_bench(const BenchReport& report);

}  // namespace pttr
