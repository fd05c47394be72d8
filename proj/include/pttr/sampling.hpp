#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pttr/geometry.hpp"
#include "pttr/numeric.hpp"

namespace pttr {

enum class SamplerKind { kRandom, kDfps, kFfps, kRas, kHybrid };

std::string to_string(SamplerKind kind);
/// Accepts random | dfps | ffps | ras | hybrid; throws std::invalid_argument otherwise.
SamplerKind parse_sampler(std::string_view name);

struct SampleSelection {
  std::vector<int> indices;
  SamplerKind method = SamplerKind::kDfps;
  // Set when k exceeded the source size and indices were repeated round-robin.
  bool padded = false;
};

SampleSelection sample_random(std::size_t n, std::size_t k, Rng& rng);

/// Greedy farthest-point sampling on coordinates, ties to the lowest index.
SampleSelection sample_dfps(std::span<const Point3> coords, std::size_t k, std::size_t start_index = 0);

/// Same greedy scheme with L2 distance between feature rows.
template <typename T>
SampleSelection sample_ffps(const Matrix<T>& features, std::size_t k, std::size_t start_index = 0);

/// V_i = min_j ||search_i - template_j||.
template <typename T>
std::vector<T> ras_scores(const Matrix<T>& search_features, const Matrix<T>& template_features);

/// The k search rows with the smallest scores, ascending, ties to the lowest index.
template <typename T>
SampleSelection sample_ras(const Matrix<T>& search_features, const Matrix<T>& template_features,
                           std::size_t k);

/// First k/2 by relation-aware sampling, the rest uniformly from the complement.
template <typename T>
SampleSelection sample_hybrid(const Matrix<T>& search_features,
                              const Matrix<T>& template_features, std::size_t k, Rng& rng);

/// Dispatches on `kind`. `template_features` is only read by ras and hybrid.
template <typename T>
SampleSelection sample_points(SamplerKind kind, std::span<const Point3> coords,
                              const Matrix<T>& features, const Matrix<T>* template_features,
                              std::size_t k, Rng& rng);

}  // namespace pttr
