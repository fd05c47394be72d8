#include "pttr/heads.hpp"

#include <cmath>
#include <stdexcept>

namespace pttr {

template <typename T>
int best_seed(const Prediction<T>& pred) {
  if (pred.cls.rows() < 1) throw std::invalid_argument("prediction has no seeds");
  int best = 0;
  for (Eigen::Index i = 1; i < pred.cls.rows(); ++i) {
    if (pred.cls(i, 0) > pred.cls(best, 0)) best = static_cast<int>(i);
  }
  return best;
}

template <typename T>
CoarseHead<T>::CoarseHead(int channels, int hidden, bool batchnorm)
    : cls_("head.coarse_cls", {channels, hidden, hidden, 1}, false, batchnorm),
      reg_("head.coarse_reg", {channels, hidden, hidden, 4}, false, batchnorm) {}

template <typename T>
void CoarseHead<T>::init(Rng& rng) {
  cls_.init(rng);
  reg_.init(rng);
}

template <typename T>
Prediction<T> CoarseHead<T>::forward(const Matrix<T>& matched, Mode mode, Cache* cache) {
  if (matched.rows() < 1) throw std::invalid_argument("coarse head: no seeds");
  Prediction<T> p;
  p.cls = cls_.forward(matched, mode, cache ? &cache->cls : nullptr);
  p.reg = reg_.forward(matched, mode, cache ? &cache->reg : nullptr);
  return p;
}

template <typename T>
Matrix<T> CoarseHead<T>::backward(const Cache& cache, const Prediction<T>& d_pred) {
  Matrix<T> d = cls_.backward(cache.cls, d_pred.cls);
  d += reg_.backward(cache.reg, d_pred.reg);
  return d;
}

template <typename T>
void CoarseHead<T>::collect(ParameterList<T>& out) {
  cls_.collect(out);
  reg_.collect(out);
}

template <typename T>
CoarseMotion coarse_motion(const std::vector<Point3>& seeds, const Prediction<T>& coarse) {
  if (seeds.size() != static_cast<std::size_t>(coarse.size())) {
    throw std::invalid_argument("coarse prediction rows differ from seed count");
  }
  const int i = best_seed(coarse);
  const Point3 delta{static_cast<double>(coarse.reg(i, 0)), static_cast<double>(coarse.reg(i, 1)),
                     static_cast<double>(coarse.reg(i, 2))};
  return {seeds[static_cast<std::size_t>(i)] + delta, static_cast<double>(coarse.reg(i, 3))};
}

std::vector<Point3> prm_offset(const std::vector<Point3>& seeds, const CoarseMotion& motion) {
  const Pose2 pose{motion.center, motion.yaw};
  std::vector<Point3> out;
  out.reserve(seeds.size());
  for (const auto& s : seeds) out.push_back(pose.apply_inverse(s));
  return out;
}

std::vector<Point3> apply_motion(const std::vector<Point3>& points, const CoarseMotion& motion) {
  const Pose2 pose{motion.center, motion.yaw};
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(pose.apply(p));
  return out;
}

template <typename T>
Matrix<T> local_pool(const std::vector<Point3>& queries, const std::vector<Point3>& cloud,
                     const Matrix<T>& features, double radius, PoolCache* cache) {
  if (!(radius > 0.0)) throw std::invalid_argument("local_pool radius must be > 0");
  if (static_cast<std::size_t>(features.rows()) != cloud.size()) {
    throw std::invalid_argument("local_pool: feature rows differ from cloud size");
  }
  const Eigen::Index channels = features.cols();
  Matrix<T> out = Matrix<T>::Zero(static_cast<Eigen::Index>(queries.size()), channels);
  std::vector<int> winner(queries.size() * static_cast<std::size_t>(channels), -1);
  if (!cloud.empty()) {
    const auto groups = ball_query(queries, cloud, radius, cloud.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const auto& g = groups[q];
      if (g.empty()) continue;
      const auto row = static_cast<Eigen::Index>(q);
      for (Eigen::Index ch = 0; ch < channels; ++ch) {
        int best = g.front();
        for (std::size_t j = 1; j < g.size(); ++j) {
          if (features(g[j], ch) > features(best, ch)) best = g[j];
        }
        out(row, ch) = features(best, ch);
        winner[q * static_cast<std::size_t>(channels) + static_cast<std::size_t>(ch)] = best;
      }
    }
  }
  if (cache) {
    cache->winner = std::move(winner);
    cache->source_rows = features.rows();
    cache->channels = channels;
  }
  return out;
}

template <typename T>
Matrix<T> local_pool_backward(const PoolCache& cache, const Matrix<T>& d_out) {
  Matrix<T> d = Matrix<T>::Zero(cache.source_rows, cache.channels);
  for (Eigen::Index q = 0; q < d_out.rows(); ++q) {
    for (Eigen::Index ch = 0; ch < cache.channels; ++ch) {
      const int src = cache.winner[static_cast<std::size_t>(q * cache.channels + ch)];
      if (src >= 0) d(src, ch) += d_out(q, ch);
    }
  }
  return d;
}

template <typename T>
RefineHead<T>::RefineHead(int channels, const std::vector<int>& hidden, bool batchnorm)
    : channels_(channels) {
  if (hidden.size() != 4) throw std::invalid_argument("refine head needs 4 hidden widths");
  std::vector<int> dims{3 * channels};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(5);
  mlp_ = Mlp<T>("head.refine", dims, false, batchnorm);
}

template <typename T>
void RefineHead<T>::init(Rng& rng) {
  mlp_.init(rng);
}

template <typename T>
Prediction<T> RefineHead<T>::forward(const Matrix<T>& search_pool, const Matrix<T>& template_pool,
                                     const Matrix<T>& matched, Mode mode, Cache* cache) {
  for (const Matrix<T>* m : {&search_pool, &template_pool, &matched}) {
    if (m->cols() != channels_) {
      throw std::invalid_argument("refine head: expected width " + std::to_string(channels_) +
                                  ", got " + std::to_string(m->cols()));
    }
  }
  const Matrix<T> joined = hconcat<T>({&search_pool, &template_pool, &matched});
  const Matrix<T> y = mlp_.forward(joined, mode, cache ? &cache->mlp : nullptr);
  return {y.leftCols(1), y.rightCols(4)};
}

template <typename T>
typename RefineHead<T>::Grads RefineHead<T>::backward(const Cache& cache,
                                                      const Prediction<T>& d_pred) {
  Matrix<T> dy(d_pred.cls.rows(), 5);
  dy.leftCols(1) = d_pred.cls;
  dy.rightCols(4) = d_pred.reg;
  const Matrix<T> d_joined = mlp_.backward(cache.mlp, dy);
  return {d_joined.leftCols(channels_), d_joined.middleCols(channels_, channels_),
          d_joined.rightCols(channels_)};
}

template <typename T>
Box3D decode_box(const Prediction<T>& pred, const std::vector<Point3>& seeds,
                 const Box3D& reference) {
  if (seeds.empty()) throw std::invalid_argument("decode_box: no seeds");
  const CoarseMotion m = coarse_motion(seeds, pred);
  return {m.center, reference.size, normalize_angle(reference.yaw + m.yaw)};
}

#define PTTR_INSTANTIATE(T)                                                                    \
  template int best_seed(const Prediction<T>&);                                                \
  template class CoarseHead<T>;                                                                \
  template class RefineHead<T>;                                                                \
  template CoarseMotion coarse_motion(const std::vector<Point3>&, const Prediction<T>&);       \
  template Matrix<T> local_pool(const std::vector<Point3>&, const std::vector<Point3>&,        \
                                const Matrix<T>&, double, PoolCache*);                         \
  template Matrix<T> local_pool_backward(const PoolCache&, const Matrix<T>&);                  \
  template Box3D decode_box(const Prediction<T>&, const std::vector<Point3>&, const Box3D&);

PTTR_INSTANTIATE(float)
PTTR_INSTANTIATE(double)
#undef PTTR_INSTANTIATE

}  // namespace pttr
