#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pttr/config.hpp"
#include "pttr/model.hpp"
#include "pttr/tracklet.hpp"

namespace pttr {

template <typename T>
struct Targets {
  Matrix<T> cls;  // N x 1, 1 for seeds inside the gt box
  Matrix<T> reg;  // N x 4, (gt center - seed, wrapped gt yaw - template yaw)
  std::vector<bool> pos_mask;

  std::size_t positives() const;
};

template <typename T>
Targets<T> make_targets(const std::vector<Point3>& seeds, const Box3D& gt_box, double template_yaw);

struct LossBreakdown {
  double total = 0.0;
  double cls_coarse = 0.0;
  double reg_coarse = 0.0;
  double cls_refined = 0.0;
  double reg_refined = 0.0;
};

/// BCE + positive-only MSE for the coarse stage plus lambda times the same for
/// the refined stage. `refined` may be null (refinement off). Gradients with
/// respect to the predictions are written when the out-pointers are given.
template <typename T>
LossBreakdown total_loss(const Prediction<T>& coarse, const Prediction<T>* refined,
                         const Targets<T>& targets, double lambda,
                         Prediction<T>* d_coarse = nullptr, Prediction<T>* d_refined = nullptr);

/// A template/search pair expressed in the frame of `reference` (its center at
/// the origin, its heading along +x).
struct NetInput {
  std::vector<Point3> template_points;
  std::vector<Point3> search_points;
  Box3D reference;  // world frame
};

std::vector<Point3> to_frame(const std::vector<Point3>& points, const Pose2& pose);

/// Exactly `k` points: a random subset, or every point padded round-robin.
std::vector<Point3> resample(const std::vector<Point3>& points, std::size_t k, Rng& rng);

/// Template from `prev_cloud` around `reference`, search from `cur_cloud`
/// inside `search_box`, both resampled and moved to the reference frame.
/// Empty when either crop is empty.
std::optional<NetInput> build_input(const PointCloud& prev_cloud, const PointCloud& cur_cloud,
                                    const Box3D& reference, const Box3D& search_box,
                                    const TrainConfig& cfg, Rng& rng);

struct TrainingSample {
  NetInput input;
  Box3D gt;  // reference frame
};

/// Template cropped at a distorted previous box, search at the previous box
/// enlarged by the margin. Empty when a crop has no points.
std::optional<TrainingSample> make_training_sample(const Frame& prev, const Frame& cur,
                                                   const TrainConfig& cfg, Rng& rng);

struct EpochLog {
  int epoch = 0;
  LossBreakdown loss;  // mean over samples
  double lr = 0.0;
  std::size_t samples = 0;
};

/// Mini-batch Adam training over consecutive-frame pairs of the tracklets.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, TrackerNet<float>& net);

  EpochLog run_epoch(const std::vector<Tracklet>& tracklets, int epoch);
  Rng& rng() { return rng_; }

  /// Loss and gradients of one sample; gradients are scaled by `grad_scale`
  /// and accumulated into the network parameters.
  LossBreakdown accumulate(const TrainingSample& sample, double grad_scale);

 private:
  TrainConfig cfg_;
  TrackerNet<float>& net_;
  Adam<float> adam_;
  Rng rng_;
};

/// Returns false to stop training early.
using EpochCallback = std::function<bool(const EpochLog&)>;

/// Seeds, initializes `net` and trains for cfg.epochs epochs.
std::vector<EpochLog> train(const std::vector<Tracklet>& tracklets, const TrainConfig& cfg,
                            TrackerNet<float>& net, const EpochCallback& on_epoch = {});

void write_training_log(const std::string& path, const std::vector<EpochLog>& logs);

/// What a tracking model sees at one step.
struct StepInput {
  NetInput input;
  const Box3D* gt = nullptr;  // current ground truth, reference frame; oracle use only
};

class TrackingModel {
 public:
  virtual ~TrackingModel() = default;
  /// Returns the predicted box in the reference frame.
  virtual Box3D predict(const StepInput& step, Rng& rng) = 0;
};

class NetworkTracker : public TrackingModel {
 public:
  explicit NetworkTracker(TrackerNet<float>& net) : net_(net) {}
  Box3D predict(const StepInput& step, Rng& rng) override;

 private:
  TrackerNet<float>& net_;
};

/// Closed-loop stand-in that predicts the ground truth through the regular
/// decoding path: one-hot score on the first seed, offset to the gt center.
class OracleTracker : public TrackingModel {
 public:
  Box3D predict(const StepInput& step, Rng& rng) override;
};

struct TrackResult {
  std::vector<Box3D> boxes;
  std::vector<bool> flagged;  // search or template crop was empty
};

/// Frame 0 is `init_box`; afterwards template = previous frame at the previous
/// prediction, search = current frame inside the previous prediction enlarged
/// by the margin. `gt` is forwarded to the model (oracle use) when given.
TrackResult track_sequence(const std::vector<PointCloud>& frames, const Box3D& init_box,
                           TrackingModel& model, const TrainConfig& cfg, Rng& rng,
                           const std::vector<Box3D>* gt = nullptr);

TrackResult track_tracklet(const Tracklet& tracklet, TrackingModel& model, const TrainConfig& cfg,
                           Rng& rng, bool pass_gt = false);

}  // namespace pttr
