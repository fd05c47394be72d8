#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace pttr {

using Rng = std::mt19937_64;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Point3&) const = default;
};

double squared_distance(const Point3& a, const Point3& b);
double distance(const Point3& a, const Point3& b);

/// Point coordinates plus an optional per-point feature matrix (one row per point).
struct PointCloud {
  std::vector<Point3> points;
  std::optional<Eigen::MatrixXd> features;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  /// Throws std::invalid_argument on non-finite coordinates or a feature row mismatch.
  void validate() const;
};

struct BoxSize {
  double length = 1.0;  // along the heading (box-frame x)
  double width = 1.0;   // box-frame y
  double height = 1.0;  // z
  bool operator==(const BoxSize&) const = default;
};

/// Yaw-only oriented box. Yaw is kept in (-pi, pi].
struct Box3D {
  Point3 center;
  BoxSize size;
  double yaw = 0.0;

  /// Serialized layout: cx, cy, cz, l, w, h, yaw.
  std::array<double, 7> to_array() const;
  static Box3D from_array(std::span<const double> v);
  void validate() const;
  double volume() const { return size.length * size.width * size.height; }
  bool operator==(const Box3D&) const = default;
};

double normalize_angle(double a);

/// Rigid transform (z-rotation then translation) mapping box-local to world.
struct Pose2 {
  Point3 translation;
  double yaw = 0.0;

  Point3 apply(const Point3& p) const;
  Point3 apply_inverse(const Point3& p) const;
  Box3D apply(const Box3D& b) const;
  Box3D apply_inverse(const Box3D& b) const;
};

inline Pose2 box_pose(const Box3D& b) { return {b.center, b.yaw}; }

/// Expresses `p` in the frame of `box` (translate by -center, rotate by -yaw).
Point3 to_box_frame(const Point3& p, const Box3D& box);

std::array<Point3, 8> box_corners(const Box3D& box);

std::vector<bool> points_in_box(std::span<const Point3> points, const Box3D& box);
std::vector<bool> points_in_box(const PointCloud& cloud, const Box3D& box);
std::size_t count_points_in_box(std::span<const Point3> points, const Box3D& box);

/// Subset of `cloud` (features included) selected by `mask`.
PointCloud select_points(const PointCloud& cloud, const std::vector<bool>& mask);

PointCloud crop_box(const PointCloud& cloud, const Box3D& box);

/// Points inside `box` with every size component scaled by (1 + extend_ratio).
PointCloud crop_template(const PointCloud& cloud, const Box3D& box, double extend_ratio);

/// Adds `margin_m` on every side, so each size component grows by 2 * margin_m.
Box3D enlarge_box(const Box3D& box, double margin_m);

/// Rotated 3D IoU: exact BEV convex clipping times z-overlap.
double box_iou_3d(const Box3D& a, const Box3D& b);

/// Area of the intersection of the two yaw-rotated footprints.
double bev_intersection_area(const Box3D& a, const Box3D& b);

/// For each query, indices (ascending) of up to `max_k` cloud points within `radius` (inclusive).
std::vector<std::vector<int>> ball_query(std::span<const Point3> queries,
                                         std::span<const Point3> cloud, double radius,
                                         std::size_t max_k);

/// Shifts the center by independent U[-range_m, range_m] draws on x, y, z.
Box3D distort_box(const Box3D& box, double range_m, Rng& rng);

Point3 centroid(std::span<const Point3> points);

}  // namespace pttr
