#pragma once

#include <vector>

#include "pttr/config.hpp"
#include "pttr/nn.hpp"

namespace pttr {

/// Per-seed objectness logit and (dx, dy, dz, dyaw) regression.
template <typename T>
struct Prediction {
  Matrix<T> cls;  // N x 1, raw logits
  Matrix<T> reg;  // N x 4

  Eigen::Index size() const { return cls.rows(); }
};

/// Index of the largest logit; ties go to the lowest index.
template <typename T>
int best_seed(const Prediction<T>& pred);

/// Two independent 3-layer MLPs over the matched features.
template <typename T>
class CoarseHead {
 public:
  struct Cache {
    typename Mlp<T>::Cache cls, reg;
  };

  CoarseHead() = default;
  CoarseHead(int channels, int hidden, bool batchnorm);

  void init(Rng& rng);
  Prediction<T> forward(const Matrix<T>& matched, Mode mode, Cache* cache);
  Matrix<T> backward(const Cache& cache, const Prediction<T>& d_pred);
  void collect(ParameterList<T>& out);

  Mlp<T>& cls_mlp() { return cls_; }
  Mlp<T>& reg_mlp() { return reg_; }

 private:
  Mlp<T> cls_;
  Mlp<T> reg_;
};

/// The rigid motion read off the best coarse seed: the object moved to
/// seed + delta and turned by dyaw.
struct CoarseMotion {
  Point3 center;
  double yaw = 0.0;
};

template <typename T>
CoarseMotion coarse_motion(const std::vector<Point3>& seeds, const Prediction<T>& coarse);

/// Maps search seeds into the template's canonical frame by inverting the
/// coarse motion: rotate(seed - center, -yaw).
std::vector<Point3> prm_offset(const std::vector<Point3>& seeds, const CoarseMotion& motion);

/// Forward counterpart of prm_offset.
std::vector<Point3> apply_motion(const std::vector<Point3>& points, const CoarseMotion& motion);

struct PoolCache {
  std::vector<int> winner;  // source row per (query, channel), -1 for an empty ball
  Eigen::Index source_rows = 0;
  Eigen::Index channels = 0;
};

/// Max-pools the features of all cloud points within `radius` of each query;
/// an empty neighborhood pools to zeros.
template <typename T>
Matrix<T> local_pool(const std::vector<Point3>& queries, const std::vector<Point3>& cloud,
                     const Matrix<T>& features, double radius, PoolCache* cache = nullptr);

template <typename T>
Matrix<T> local_pool_backward(const PoolCache& cache, const Matrix<T>& d_out);

/// 5-layer MLP over [F_search, F_template, matched]; output columns split into
/// one logit and four regression values.
template <typename T>
class RefineHead {
 public:
  struct Cache {
    typename Mlp<T>::Cache mlp;
  };
  struct Grads {
    Matrix<T> d_search_pool, d_template_pool, d_matched;
  };

  RefineHead() = default;
  RefineHead(int channels, const std::vector<int>& hidden, bool batchnorm);

  void init(Rng& rng);
  Prediction<T> forward(const Matrix<T>& search_pool, const Matrix<T>& template_pool,
                        const Matrix<T>& matched, Mode mode, Cache* cache);
  Grads backward(const Cache& cache, const Prediction<T>& d_pred);
  void collect(ParameterList<T>& out) { mlp_.collect(out); }

 private:
  int channels_ = 0;
  Mlp<T> mlp_;
};

/// Box from the best seed: center = seed + delta, yaw = reference yaw + dyaw,
/// size copied from the reference.
template <typename T>
Box3D decode_box(const Prediction<T>& pred, const std::vector<Point3>& seeds,
                 const Box3D& reference);

}  // namespace pttr
