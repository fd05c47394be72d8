#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pttr/pipeline.hpp"

namespace pttr {

/// Mean IoU x 100. Throws on an empty list or values outside [0, 1].
double success_metric(std::span<const double> ious);

/// Area under P(IoU >= t) for t in [0, 1], x 100, by trapezoidal integration
/// over `thresholds` uniform points. Agrees with success_metric up to the
/// discretization.
double success_auc(std::span<const double> ious, int thresholds = 1001);

/// Area under P(dist <= tau) for tau in [0, 2] m over 201 uniform thresholds,
/// normalized by 2, x 100.
double precision_metric(std::span<const double> distances);

struct ClassMetrics {
  std::string label;
  double success = 0.0;
  double precision = 0.0;
  std::size_t frames = 0;
  std::size_t tracklets = 0;
};

/// Frame-count weighted mean of the class rows; its label is "Average".
ClassMetrics weighted_average(const std::vector<ClassMetrics>& classes);

/// One scored frame.
struct FrameRecord {
  std::size_t tracklet = 0;
  std::size_t frame = 0;
  Box3D predicted;
  double iou = 0.0;
  double center_distance = 0.0;
  bool flagged = false;
};

struct EvalReport {
  std::vector<ClassMetrics> classes;  // sorted by label
  ClassMetrics average;
  std::vector<std::string> failures;  // one message per tracklet that threw
  std::vector<FrameRecord> records;   // not serialized to JSON

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

/// Tracks every tracklet from its first gt box and scores frames 1..n-1.
/// Tracklet i uses its own generator seeded from (seed, i), so the result does
/// not depend on `threads`. The model must tolerate concurrent predict calls
/// when threads > 1.
EvalReport evaluate(const std::vector<Tracklet>& tracklets, TrackingModel& model,
                    const TrainConfig& cfg, std::uint64_t seed, int threads = 1,
                    bool pass_gt = false);

/// Fixed-column text table: label, tracklets, frames, success, precision.
std::string format_report_table(const EvalReport& report);

/// tracklet,frame,cx,cy,cz,l,w,h,yaw,iou,center_distance,flagged
void write_records_csv(const std::string& path, const std::vector<FrameRecord>& records);

}  // namespace pttr
