#include "pttr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace pttr {

template <typename T>
std::size_t Targets<T>::positives() const {
  return static_cast<std::size_t>(std::count(pos_mask.begin(), pos_mask.end(), true));
}

template <typename T>
Targets<T> make_targets(const std::vector<Point3>& seeds, const Box3D& gt_box,
                        double template_yaw) {
  Targets<T> t;
  const auto n = static_cast<Eigen::Index>(seeds.size());
  t.pos_mask = points_in_box(seeds, gt_box);
  t.cls.resize(n, 1);
  t.reg.resize(n, 4);
  const double dyaw = normalize_angle(gt_box.yaw - template_yaw);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point3 d = gt_box.center - seeds[static_cast<std::size_t>(i)];
    t.cls(i, 0) = t.pos_mask[static_cast<std::size_t>(i)] ? T(1) : T(0);
    t.reg(i, 0) = static_cast<T>(d.x);
    t.reg(i, 1) = static_cast<T>(d.y);
    t.reg(i, 2) = static_cast<T>(d.z);
    t.reg(i, 3) = static_cast<T>(dyaw);
  }
  return t;
}

template <typename T>
LossBreakdown total_loss(const Prediction<T>& coarse, const Prediction<T>* refined,
                         const Targets<T>& targets, double lambda, Prediction<T>* d_coarse,
                         Prediction<T>* d_refined) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
  LossBreakdown out;
  out.cls_coarse = bce_with_logits(coarse.cls, targets.cls, d_coarse ? &d_coarse->cls : nullptr);
  out.reg_coarse = masked_mse_loss(coarse.reg, targets.reg, targets.pos_mask,
                                   d_coarse ? &d_coarse->reg : nullptr);
  out.total = out.cls_coarse + out.reg_coarse;
  if (refined) {
    out.cls_refined =
        bce_with_logits(refined->cls, targets.cls, d_refined ? &d_refined->cls : nullptr);
    out.reg_refined = masked_mse_loss(refined->reg, targets.reg, targets.pos_mask,
                                      d_refined ? &d_refined->reg : nullptr);
    out.total += lambda * (out.cls_refined + out.reg_refined);
    if (d_refined) {
      d_refined->cls *= static_cast<T>(lambda);
      d_refined->reg *= static_cast<T>(lambda);
    }
  }
  return out;
}

std::vector<Point3> to_frame(const std::vector<Point3>& points, const Pose2& pose) {
  std::vector<Point3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(pose.apply_inverse(p));
  return out;
}

std::vector<Point3> resample(const std::vector<Point3>& points, std::size_t k, Rng& rng) {
  if (points.empty()) throw std::invalid_argument("resample: empty point set");
  const SampleSelection sel = sample_random(points.size(), k, rng);
  std::vector<Point3> out;
  out.reserve(k);
  for (int i : sel.indices) out.push_back(points[static_cast<std::size_t>(i)]);
  return out;
}

std::optional<NetInput> build_input(const PointCloud& prev_cloud, const PointCloud& cur_cloud,
                                    const Box3D& reference, const Box3D& search_box,
                                    const TrainConfig& cfg, Rng& rng) {
  const PointCloud templ = crop_template(prev_cloud, reference, cfg.template_extend);
  const PointCloud search = crop_box(cur_cloud, search_box);
  if (templ.empty() || search.empty()) return std::nullopt;
  const Pose2 pose = box_pose(reference);
  NetInput in;
  in.template_points =
      to_frame(resample(templ.points, static_cast<std::size_t>(cfg.model.template_points), rng), pose);
  in.search_points =
      to_frame(resample(search.points, static_cast<std::size_t>(cfg.model.search_points), rng), pose);
  in.reference = reference;
  return in;
}

std::optional<TrainingSample> make_training_sample(const Frame& prev, const Frame& cur,
                                                   const TrainConfig& cfg, Rng& rng) {
  Box3D reference = distort_box(prev.box, cfg.distort_range, rng);
  if (cfg.yaw_distort_range > 0.0) {
    std::uniform_real_distribution<double> u(-cfg.yaw_distort_range, cfg.yaw_distort_range);
    reference.yaw = normalize_angle(reference.yaw + u(rng));
  }
  auto in = build_input(prev.cloud, cur.cloud, reference, enlarge_box(prev.box, cfg.search_margin),
                        cfg, rng);
  if (!in) return std::nullopt;
  TrainingSample s;
  s.gt = box_pose(reference).apply_inverse(cur.box);
  s.input = std::move(*in);
  return s;
}

// ---------------------------------------------------------------------------
// Training

namespace {

constexpr std::uint64_t kDataStream = 0x9E3779B97F4A7C15ULL;

struct PairRef {
  std::size_t tracklet;
  std::size_t frame;  // current frame; the previous one is frame - 1
};

std::string describe(const LossBreakdown& l) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "total=%g cls_c=%g reg_c=%g cls_f=%g reg_f=%g", l.total,
                l.cls_coarse, l.reg_coarse, l.cls_refined, l.reg_refined);
  return buf;
}

void add_to(LossBreakdown& acc, const LossBreakdown& l, double w) {
  acc.total += w * l.total;
  acc.cls_coarse += w * l.cls_coarse;
  acc.reg_coarse += w * l.reg_coarse;
  acc.cls_refined += w * l.cls_refined;
  acc.reg_refined += w * l.reg_refined;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, TrackerNet<float>& net)
    : cfg_(cfg),
      net_(net),
      adam_(AdamConfig{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}),
      rng_(cfg.seed ^ kDataStream) {
  cfg_.validate();
}

LossBreakdown Trainer::accumulate(const TrainingSample& sample, double grad_scale) {
  typename TrackerNet<float>::Cache cache;
  const auto out = net_.forward(sample.input.template_points, sample.input.search_points,
                                Mode::kTrain, rng_, nullptr, &cache);
  const auto targets = make_targets<float>(out.seeds, sample.gt, 0.0);
  Prediction<float> d_coarse;
  Prediction<float> d_refined;
  const LossBreakdown loss = total_loss(out.coarse, out.refined ? &*out.refined : nullptr, targets,
                                        cfg_.lambda, &d_coarse, &d_refined);
  if (!std::isfinite(loss.total)) {
    throw std::runtime_error("non-finite loss (" + describe(loss) + ")");
  }
  const auto s = static_cast<float>(grad_scale);
  d_coarse.cls *= s;
  d_coarse.reg *= s;
  if (out.refined) {
    d_refined.cls *= s;
    d_refined.reg *= s;
  }
  net_.backward(cache, d_coarse, out.refined ? &d_refined : nullptr);
  return loss;
}

EpochLog Trainer::run_epoch(const std::vector<Tracklet>& tracklets, int epoch) {
  EpochLog log;
  log.epoch = epoch;
  log.lr = cfg_.lr_at_epoch(epoch);
  adam_.set_lr(log.lr);

  std::vector<PairRef> pairs;
  for (std::size_t t = 0; t < tracklets.size(); ++t) {
    for (std::size_t f = 1; f < tracklets[t].frames.size(); ++f) pairs.push_back({t, f});
  }
  std::shuffle(pairs.begin(), pairs.end(), rng_);

  const auto params = net_.parameters();
  const auto batch = static_cast<std::size_t>(cfg_.batch_size);
  for (std::size_t start = 0; start < pairs.size(); start += batch) {
    const std::size_t end = std::min(pairs.size(), start + batch);
    std::vector<TrainingSample> samples;
    for (std::size_t i = start; i < end; ++i) {
      const Tracklet& tr = tracklets[pairs[i].tracklet];
      auto s = make_training_sample(tr.frames[pairs[i].frame - 1], tr.frames[pairs[i].frame], cfg_,
                                    rng_);
      if (s) samples.push_back(std::move(*s));
    }
    if (samples.empty()) continue;
    zero_grads(params);
    const double scale = 1.0 / static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      LossBreakdown l;
      try {
        l = accumulate(samples[i], scale);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("epoch " + std::to_string(epoch) + ", batch at pair " +
                                 std::to_string(start) + ": " + e.what());
      }
      add_to(log.loss, l, 1.0);
      ++log.samples;
    }
    adam_.step(params);
  }
  if (log.samples > 0) {
    LossBreakdown mean;
    add_to(mean, log.loss, 1.0 / static_cast<double>(log.samples));
    log.loss = mean;
  }
  return log;
}

std::vector<EpochLog> train(const std::vector<Tracklet>& tracklets, const TrainConfig& cfg,
                            TrackerNet<float>& net, const EpochCallback& on_epoch) {
  cfg.validate();
  bool any_pair = false;
  for (const auto& t : tracklets) any_pair = any_pair || t.frames.size() >= 2;
  if (!any_pair) throw std::invalid_argument("training needs a tracklet with at least 2 frames");
  Rng init_rng(cfg.seed);
  net.init(init_rng);
  Trainer trainer(cfg, net);
  std::vector<EpochLog> logs;
  for (int e = 0; e < cfg.epochs; ++e) {
    logs.push_back(trainer.run_epoch(tracklets, e));
    if (on_epoch && !on_epoch(logs.back())) break;
  }
  return logs;
}

void write_training_log(const std::string& path, const std::vector<EpochLog>& logs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,total,cls_c,reg_c,cls_f,reg_f,lr\n";
  char buf[512];
  for (const auto& l : logs) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", l.epoch, l.loss.total,
                  l.loss.cls_coarse, l.loss.reg_coarse, l.loss.cls_refined, l.loss.reg_refined,
                  l.lr);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Tracking

Box3D NetworkTracker::predict(const StepInput& step, Rng& rng) {
  const auto out = net_.forward(step.input.template_points, step.input.search_points, Mode::kEval,
                                rng);
  const Box3D canonical{{}, step.input.reference.size, 0.0};
  return decode_box(out.final_prediction(), out.seeds, canonical);
}

Box3D OracleTracker::predict(const StepInput& step, Rng&) {
  if (step.gt == nullptr) throw std::logic_error("oracle tracker needs ground truth");
  const auto& seeds = step.input.search_points;
  const auto n = static_cast<Eigen::Index>(seeds.size());
  Prediction<double> pred{MatrixD::Zero(n, 1), MatrixD::Zero(n, 4)};
  pred.cls(0, 0) = 1.0;
  const Point3 d = step.gt->center - seeds.front();
  pred.reg.row(0) << d.x, d.y, d.z, step.gt->yaw;
  const Box3D canonical{{}, step.input.reference.size, 0.0};
  return decode_box(pred, seeds, canonical);
}

namespace {

template <typename CloudAt>
TrackResult track_impl(std::size_t n, const CloudAt& cloud_at, const Box3D& init_box,
                       TrackingModel& model, const TrainConfig& cfg, Rng& rng,
                       const std::vector<Box3D>* gt) {
  if (n == 0) throw std::invalid_argument("track_sequence needs at least one frame");
  if (gt && gt->size() != n) throw std::invalid_argument("ground-truth length differs from frames");
  init_box.validate();
  TrackResult res;
  res.boxes.push_back(init_box);
  res.flagged.push_back(false);
  for (std::size_t f = 1; f < n; ++f) {
    const Box3D prev = res.boxes.back();
    auto in = build_input(cloud_at(f - 1), cloud_at(f), prev, enlarge_box(prev, cfg.search_margin),
                          cfg, rng);
    if (!in) {
      res.boxes.push_back(prev);
      res.flagged.push_back(true);
      continue;
    }
    const Pose2 pose = box_pose(prev);
    std::optional<Box3D> gt_local;
    if (gt) gt_local = pose.apply_inverse((*gt)[f]);
    StepInput step{std::move(*in), gt_local ? &*gt_local : nullptr};
    Box3D local = model.predict(step, rng);
    local.size = init_box.size;
    res.boxes.push_back(pose.apply(local));
    res.flagged.push_back(false);
  }
  return res;
}

}  // namespace

TrackResult track_sequence(const std::vector<PointCloud>& frames, const Box3D& init_box,
                           TrackingModel& model, const TrainConfig& cfg, Rng& rng,
                           const std::vector<Box3D>* gt) {
  return track_impl(
      frames.size(), [&](std::size_t i) -> const PointCloud& { return frames[i]; }, init_box,
      model, cfg, rng, gt);
}

TrackResult track_tracklet(const Tracklet& tracklet, TrackingModel& model, const TrainConfig& cfg,
                           Rng& rng, bool pass_gt) {
  if (tracklet.frames.empty()) throw std::invalid_argument("tracklet has no frames");
  const auto boxes = tracklet.boxes();
  return track_impl(
      tracklet.frames.size(),
      [&](std::size_t i) -> const PointCloud& { return tracklet.frames[i].cloud; },
      tracklet.frames.front().box, model, cfg, rng, pass_gt ? &boxes : nullptr);
}

template struct Targets<float>;
template struct Targets<double>;
template Targets<float> make_targets(const std::vector<Point3>&, const Box3D&, double);
template Targets<double> make_targets(const std::vector<Point3>&, const Box3D&, double);
template LossBreakdown total_loss(const Prediction<float>&, const Prediction<float>*,
                                  const Targets<float>&, double, Prediction<float>*,
                                  Prediction<float>*);
template LossBreakdown total_loss(const Prediction<double>&, const Prediction<double>*,
                                  const Targets<double>&, double, Prediction<double>*,
                                  Prediction<double>*);

}  // namespace pttr
