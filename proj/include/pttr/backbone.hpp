#pragma once

#include <array>
#include <optional>
#include <vector>

#include "pttr/config.hpp"
#include "pttr/nn.hpp"
#include "pttr/sampling.hpp"

namespace pttr {

template <typename T>
struct PointLevel {
  std::vector<Point3> coords;
  Matrix<T> features;  // one row per coordinate
};

struct SALayerConfig {
  double radius = 0.3;
  int max_neighbors = 32;
  std::vector<int> mlp_dims;  // output widths of the shared MLP
};

/// Sample, group by ball query, encode each neighbor with a shared MLP, max-pool.
template <typename T>
class SetAbstraction {
 public:
  struct Cache {
    std::vector<int> neighbor;   // source row of every grouped row
    std::vector<int> segment;    // first grouped row of each centroid, plus end sentinel
    typename Mlp<T>::Cache mlp;
    std::vector<int> winner;     // grouped row that won the max, per (centroid, channel)
    Eigen::Index in_rows = 0;
  };

  SetAbstraction() = default;
  SetAbstraction(const std::string& name, int in_channels, const SALayerConfig& cfg,
                 bool batchnorm);

  void init(Rng& rng) { mlp_.init(rng); }
  const SALayerConfig& config() const { return cfg_; }
  int out_channels() const { return mlp_.out_dim(); }

  /// One output row per selected centroid. Grouped rows are
  /// [neighbor features, (neighbor - centroid) / radius].
  PointLevel<T> forward(const PointLevel<T>& in, const SampleSelection& selection, Mode mode,
                        Cache* cache);
  /// Gradient w.r.t. the input level's features.
  Matrix<T> backward(const Cache& cache, const Matrix<T>& d_out);
  void collect(ParameterList<T>& out) { mlp_.collect(out); }

 private:
  SALayerConfig cfg_;
  int in_channels_ = 0;
  Mlp<T> mlp_;
};

/// Samplers picked for one forward pass, recorded so it can be replayed exactly.
struct BackboneSelections {
  std::array<SampleSelection, 3> template_levels;
  std::array<SampleSelection, 3> search_levels;
};

template <typename T>
struct BranchOutput {
  std::array<PointLevel<T>, 4> levels;  // 0: embedded input, 1..3: SA outputs
  const PointLevel<T>& final() const { return levels[3]; }
};

/// Shared-weight two-branch feature extractor. One parameter set serves both
/// the template and the search branch.
template <typename T>
class Backbone {
 public:
  struct BranchCache {
    typename Mlp<T>::Cache embed;
    std::array<typename SetAbstraction<T>::Cache, 3> sa;
  };
  struct Cache {
    BranchCache template_branch;
    BranchCache search_branch;
  };
  struct Output {
    BranchOutput<T> template_branch;
    BranchOutput<T> search_branch;
    BackboneSelections selections;
  };

  Backbone() = default;
  explicit Backbone(const ModelConfig& cfg);

  void init(Rng& rng);
  int channels() const { return sa_[2].out_channels(); }

  /// Coordinates are embedded relative to `reference`, so translating both
  /// clouds and the reference together leaves every feature unchanged. The
  /// search branch samples level l against the template's level l-1 features.
  /// With `replay` set, the recorded selections are reused instead of sampling.
  Output forward(const std::vector<Point3>& template_points, const std::vector<Point3>& search_points,
                 const Point3& reference, Mode mode, Rng& rng, const BackboneSelections* replay,
                 Cache* cache);

  /// Accumulates parameter gradients from gradients on the final-level features.
  void backward(const Cache& cache, const Matrix<T>& d_template_final,
                const Matrix<T>& d_search_final);

  void collect(ParameterList<T>& out);

 private:
  PointLevel<T> embed(const std::vector<Point3>& points, const Point3& reference, Mode mode,
                      typename Mlp<T>::Cache* cache);
  void backward_branch(const BranchCache& cache, const Matrix<T>& d_final);

  ModelConfig cfg_;
  Mlp<T> embed_;
  std::array<SetAbstraction<T>, 3> sa_;
};

}  // namespace pttr
