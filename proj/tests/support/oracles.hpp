#pragma once

// Independent brute-force reference implementations used to check the library.
// They share no code with the implementations under test beyond the plain data types.

#include <cstdint>
#include <vector>

#include "pttr/geometry.hpp"
#include "pttr/nn.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

/// Greedy farthest-point selection: at every step, among unselected rows take
/// the one maximizing the minimum squared distance to the selected set; the
/// lowest index wins ties. O(k^2 N).
std::vector<int> greedy_fps(const Rows& rows, std::size_t k, std::size_t start);

Rows coords_as_rows(const std::vector<pttr::Point3>& pts);

template <typename M>
Rows matrix_rows(const M& m) {
  Rows out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  }
  return out;
}

/// Minimum Euclidean distance from each search row to the template rows.
std::vector<double> min_distances(const Rows& search, const Rows& templ);

/// Indices sorted by (score, index), first k.
std::vector<int> sort_select(const std::vector<double>& scores, std::size_t k);

std::vector<std::vector<int>> ball_query(const std::vector<pttr::Point3>& queries,
                                         const std::vector<pttr::Point3>& cloud, double radius,
                                         std::size_t max_k);

/// Max-pool over every cloud point within radius; zeros for an empty ball.
pttr::MatrixD local_pool(const std::vector<pttr::Point3>& queries,
                         const std::vector<pttr::Point3>& cloud, const pttr::MatrixD& feats,
                         double radius);

bool inside(const pttr::Box3D& box, const pttr::Point3& p);

/// Monte-Carlo IoU: uniform samples over the AABB of both boxes' corners.
double monte_carlo_iou(const pttr::Box3D& a, const pttr::Box3D& b, std::size_t samples,
                       std::uint64_t seed);

/// Sets every bias to a random value of magnitude in [0.02, 0.1] so no unit
/// starts exactly on a ReLU kink (biases are initialized to zero).
void jitter_biases(const pttr::ParameterList<double>& params, pttr::Rng& rng);

/// Fixture for sampler comparisons: an object (surface points plus noise)
/// making up `fg_fraction` of a search cloud, the rest background clutter, a
/// template from a separate draw of the object, and per-point features from a
/// randomly initialized coordinate embedding relative to the template centroid.
struct SamplingFixture {
  std::vector<pttr::Point3> search;
  std::vector<bool> foreground;
  pttr::MatrixD search_features;
  pttr::MatrixD template_features;
};

SamplingFixture sampling_fixture(std::uint64_t seed, std::size_t search_points = 512,
                                 double fg_fraction = 0.2);

double foreground_fraction(const std::vector<int>& indices, const std::vector<bool>& foreground);

}  // namespace oracle
