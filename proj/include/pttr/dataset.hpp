#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pttr/tracklet.hpp"

namespace pttr {

struct Annotation {
  std::string object_id;
  std::string label;
  Box3D box;
};

/// One frame of a labeled sequence.
struct AnnotatedScene {
  PointCloud cloud;
  std::vector<Annotation> annotations;
};

/// Splits each object's annotations into maximal runs of consecutive frames,
/// drops frames with fewer than `min_points` points in the box (splitting the
/// run there), then drops runs shorter than `min_len`. Tracklets are ordered by
/// first frame, then by first appearance of the object. Throws
/// std::invalid_argument naming the frame and object for a malformed annotation.
std::vector<Tracklet> build_tracklets(const std::vector<AnnotatedScene>& scenes,
                                      std::size_t min_points = 10, std::size_t min_len = 3);

// Cloud files: u32 point count, then count x 3 float32, all little-endian.
std::vector<std::uint8_t> encode_cloud(const PointCloud& cloud);
PointCloud decode_cloud(const std::vector<std::uint8_t>& bytes);
void write_cloud(const std::string& path, const PointCloud& cloud);
PointCloud read_cloud(const std::string& path);

/// JSON lines: {"cloud": "<file>", "annotations": [{"object_id", "class", "box": [7]}]}.
/// Relative cloud paths resolve against the directory of `path`.
std::vector<AnnotatedScene> read_scenes_jsonl(const std::string& path);
void write_scenes_jsonl(const std::string& path, const std::vector<AnnotatedScene>& scenes);

/// Directory layout: meta.json (object_id, class, frame_count, boxes) plus
/// frame_%04d.bin per frame.
void save_tracklet(const std::string& dir, const Tracklet& tracklet);
Tracklet load_tracklet(const std::string& dir);

/// One tracklet_%04d directory per tracklet under `root`.
void save_dataset(const std::string& root, const std::vector<Tracklet>& tracklets);
/// Loads every subdirectory of `root` holding a meta.json, in name order.
std::vector<Tracklet> load_dataset(const std::string& root);

/// Parameters of a synthetic tracklet. Distances in meters, angles in radians,
/// motion per frame.
struct SynthSpec {
  std::string label = "Car";
  BoxSize size{4.0, 1.8, 1.6};
  int frames = 10;
  int points_on_object = 200;
  Point3 start{0.0, 0.0, 0.8};
  double start_yaw = 0.0;
  Point3 velocity{0.8, 0.0, 0.0};
  double yaw_rate = 0.0;
  double noise_sigma = 0.02;
  double ground_density = 3.0;  // points per square meter
  int distractors = 1;
  int distractor_points = 150;

  void validate() const;
};

/// Rigid box-surface pattern moved along a constant-velocity (plus yaw rate)
/// trajectory, with clamped Gaussian noise, a ground plane 0.1 m below the box
/// and static distractor objects 4-8 m from the path. Deterministic in `seed`.
Tracklet synth_tracklet(const SynthSpec& spec, std::uint64_t seed);

/// `count` tracklets around `base` with randomized heading, speed (up to
/// `max_speed` m/frame) and, unless `constant_velocity`, a small yaw rate.
std::vector<Tracklet> synth_suite(const SynthSpec& base, int count, std::uint64_t seed,
                                  double max_speed = 1.0, bool constant_velocity = false);

/// FNV-1a over ids, boxes and float32 point coordinates.
std::uint64_t tracklet_digest(const Tracklet& tracklet);

}  // namespace pttr
