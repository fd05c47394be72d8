#pragma once

#include <optional>
#include <vector>

#include "pttr/attention.hpp"
#include "pttr/backbone.hpp"
#include "pttr/config.hpp"
#include "pttr/heads.hpp"

namespace pttr {

/// Everything a forward pass decided without gradients: sampled indices and
/// the coarse motion used for refinement. Replaying it makes the network a
/// smooth function of its parameters (used by gradient checks).
struct ForwardRecord {
  BackboneSelections selections;
  CoarseMotion motion;
};

/// Wall time of each forward stage, accumulated across calls.
struct StageTimes {
  double backbone_ms = 0.0;
  double matching_ms = 0.0;  // relation transformer or cosine matching
  double coarse_ms = 0.0;
  double refine_ms = 0.0;
};

template <typename T>
struct NetOutput {
  Prediction<T> coarse;
  std::optional<Prediction<T>> refined;
  std::vector<Point3> seeds;           // final search level, one per prediction row
  std::vector<Point3> template_seeds;  // final template level
  Matrix<T> search_features;
  Matrix<T> template_features;
  Matrix<T> matched;
  ForwardRecord record;
  std::optional<PrtTraces<T>> traces;

  const Prediction<T>& final_prediction() const { return refined ? *refined : coarse; }
};

/// Backbone -> relation transformer (or cosine matching) -> coarse head ->
/// optional refinement, for template and search clouds given in one shared frame.
template <typename T>
class TrackerNet {
 public:
  struct Cache {
    typename Backbone<T>::Cache backbone;
    typename PointRelationTransformer<T>::Cache prt;
    CosineMatchCache<T> cosine;
    typename CoarseHead<T>::Cache coarse;
    PoolCache search_pool;
    PoolCache template_pool;
    typename RefineHead<T>::Cache refine;
  };

  explicit TrackerNet(const ModelConfig& cfg);
  TrackerNet(const TrackerNet&) = delete;
  TrackerNet& operator=(const TrackerNet&) = delete;

  void init(Rng& rng);
  const ModelConfig& config() const { return cfg_; }

  /// Coordinates are embedded relative to the template centroid.
  NetOutput<T> forward(const std::vector<Point3>& template_points,
                       const std::vector<Point3>& search_points, Mode mode, Rng& rng,
                       const ForwardRecord* replay = nullptr, Cache* cache = nullptr,
                       StageTimes* times = nullptr);

  /// Accumulates parameter gradients. `d_refined` is ignored when refinement is off.
  void backward(const Cache& cache, const Prediction<T>& d_coarse, const Prediction<T>* d_refined);

  /// Stable order; the checkpoint manifest follows it.
  ParameterList<T> parameters();

  Backbone<T>& backbone() { return backbone_; }
  PointRelationTransformer<T>& prt() { return prt_; }
  CoarseHead<T>& coarse_head() { return coarse_; }
  RefineHead<T>& refine_head() { return refine_; }

 private:
  ModelConfig cfg_;
  Backbone<T> backbone_;
  PointRelationTransformer<T> prt_;
  CoarseHead<T> coarse_;
  RefineHead<T> refine_;
};

}  // namespace pttr
