#include "pttr/model.hpp"

#include <chrono>
#include <stdexcept>

namespace pttr {

namespace {

class StageClock {
 public:
  explicit StageClock(StageTimes* times) : times_(times), last_(std::chrono::steady_clock::now()) {}
  void lap(double StageTimes::*field) {
    if (!times_) return;
    const auto now = std::chrono::steady_clock::now();
    times_->*field += std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }

 private:
  StageTimes* times_;
  std::chrono::steady_clock::time_point last_;
};

}  // namespace

template <typename T>
TrackerNet<T>::TrackerNet(const ModelConfig& cfg) : cfg_(cfg), backbone_(cfg) {
  cfg_.validate();
  const int c = cfg.channels();
  if (cfg.use_prt) prt_ = PointRelationTransformer<T>(c, cfg.use_l2_norm, cfg.use_offset);
  coarse_ = CoarseHead<T>(c, cfg.head_hidden, cfg.use_batchnorm);
  if (cfg.use_prm) refine_ = RefineHead<T>(c, cfg.refine_hidden, cfg.use_batchnorm);
}

template <typename T>
void TrackerNet<T>::init(Rng& rng) {
  backbone_.init(rng);
  if (cfg_.use_prt) prt_.init(rng);
  coarse_.init(rng);
  if (cfg_.use_prm) refine_.init(rng);
}

template <typename T>
NetOutput<T> TrackerNet<T>::forward(const std::vector<Point3>& template_points,
                                    const std::vector<Point3>& search_points, Mode mode, Rng& rng,
                                    const ForwardRecord* replay, Cache* cache,
                                    StageTimes* times) {
  StageClock clock(times);
  NetOutput<T> out;
  const Point3 reference = centroid(template_points);
  auto features = backbone_.forward(template_points, search_points, reference, mode, rng,
                                    replay ? &replay->selections : nullptr,
                                    cache ? &cache->backbone : nullptr);
  out.record.selections = std::move(features.selections);
  auto& search_final = features.search_branch.levels[3];
  auto& template_final = features.template_branch.levels[3];
  clock.lap(&StageTimes::backbone_ms);

  if (cfg_.use_prt) {
    auto prt_out = prt_.forward(search_final.features, template_final.features,
                                cache ? &cache->prt : nullptr);
    out.matched = std::move(prt_out.matched);
    out.traces = std::move(prt_out.traces);
  } else {
    out.matched = cosine_match(search_final.features, template_final.features,
                               cache ? &cache->cosine : nullptr);
  }

  clock.lap(&StageTimes::matching_ms);

  out.coarse = coarse_.forward(out.matched, mode, cache ? &cache->coarse : nullptr);
  out.record.motion = replay ? replay->motion : coarse_motion(search_final.coords, out.coarse);
  clock.lap(&StageTimes::coarse_ms);

  if (cfg_.use_prm) {
    const auto mapped = prm_offset(search_final.coords, out.record.motion);
    const Matrix<T> search_pool =
        local_pool(search_final.coords, search_final.coords, search_final.features,
                   cfg_.pool_radius, cache ? &cache->search_pool : nullptr);
    const Matrix<T> template_pool =
        local_pool(mapped, template_final.coords, template_final.features, cfg_.pool_radius,
                   cache ? &cache->template_pool : nullptr);
    out.refined = refine_.forward(search_pool, template_pool, out.matched, mode,
                                  cache ? &cache->refine : nullptr);
  }
  clock.lap(&StageTimes::refine_ms);

  out.seeds = std::move(search_final.coords);
  out.template_seeds = std::move(template_final.coords);
  out.search_features = std::move(search_final.features);
  out.template_features = std::move(template_final.features);
  return out;
}

template <typename T>
void TrackerNet<T>::backward(const Cache& cache, const Prediction<T>& d_coarse,
                             const Prediction<T>* d_refined) {
  Matrix<T> d_matched = coarse_.backward(cache.coarse, d_coarse);
  Matrix<T> d_search;
  Matrix<T> d_template;
  const bool refine = cfg_.use_prm && d_refined != nullptr;
  if (refine) {
    const auto g = refine_.backward(cache.refine, *d_refined);
    d_matched += g.d_matched;
    d_search = local_pool_backward(cache.search_pool, g.d_search_pool);
    d_template = local_pool_backward(cache.template_pool, g.d_template_pool);
  }
  if (cfg_.use_prt) {
    auto g = prt_.backward(cache.prt, d_matched);
    if (refine) {
      d_search += g.d_search;
      d_template += g.d_template;
    } else {
      d_search = std::move(g.d_search);
      d_template = std::move(g.d_template);
    }
  } else {
    auto [ds, dt] = cosine_match_backward(cache.cosine, d_matched);
    if (refine) {
      d_search += ds;
      d_template += dt;
    } else {
      d_search = std::move(ds);
      d_template = std::move(dt);
    }
  }
  backbone_.backward(cache.backbone, d_template, d_search);
}

template <typename T>
ParameterList<T> TrackerNet<T>::parameters() {
  ParameterList<T> out;
  backbone_.collect(out);
  if (cfg_.use_prt) prt_.collect(out);
  coarse_.collect(out);
  if (cfg_.use_prm) refine_.collect(out);
  return out;
}

template class TrackerNet<float>;
template class TrackerNet<double>;

}  // namespace pttr
