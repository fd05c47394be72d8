#include "pttr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pttr {

namespace {

struct Vec2 {
  double x;
  double y;
};

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Footprint corners in counter-clockwise order.
std::array<Vec2, 4> footprint(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = box.size.length / 2.0;
  const double hw = box.size.width / 2.0;
  const std::array<Vec2, 4> local = {{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {box.center.x + c * local[i].x - s * local[i].y,
              box.center.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

Vec2 segment_line_intersection(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - a.y * b.x;
  }
  return std::abs(twice) / 2.0;
}

bool finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

}  // namespace

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

double distance(const Point3& a, const Point3& b) { return std::sqrt(squared_distance(a, b)); }

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!finite(points[i])) {
      throw std::invalid_argument("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  if (features && static_cast<std::size_t>(features->rows()) != points.size()) {
    throw std::invalid_argument("feature rows (" + std::to_string(features->rows()) +
                                ") != point count (" + std::to_string(points.size()) + ")");
  }
}

std::array<double, 7> Box3D::to_array() const {
  return {center.x, center.y, center.z, size.length, size.width, size.height, yaw};
}

Box3D Box3D::from_array(std::span<const double> v) {
  if (v.size() != 7) {
    throw std::invalid_argument("box array must have 7 values, got " + std::to_string(v.size()));
  }
  Box3D b{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, normalize_angle(v[6])};
  b.validate();
  return b;
}

void Box3D::validate() const {
  if (!finite(center) || !std::isfinite(yaw)) {
    throw std::invalid_argument("box has non-finite center or yaw");
  }
  if (!(size.length > 0.0 && size.width > 0.0 && size.height > 0.0) ||
      !std::isfinite(size.length) || !std::isfinite(size.width) || !std::isfinite(size.height)) {
    throw std::invalid_argument("box size components must be positive and finite");
  }
}

double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, kTwoPi);
  if (r > std::numbers::pi) r -= kTwoPi;
  if (r <= -std::numbers::pi) r += kTwoPi;
  return r;
}

Point3 Pose2::apply(const Point3& p) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * p.x - s * p.y + translation.x, s * p.x + c * p.y + translation.y,
          p.z + translation.z};
}

Point3 Pose2::apply_inverse(const Point3& p) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const Point3 d = p - translation;
  return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

Box3D Pose2::apply(const Box3D& b) const {
  return {apply(b.center), b.size, normalize_angle(b.yaw + yaw)};
}

Box3D Pose2::apply_inverse(const Box3D& b) const {
  return {apply_inverse(b.center), b.size, normalize_angle(b.yaw - yaw)};
}

Point3 to_box_frame(const Point3& p, const Box3D& box) {
  return box_pose(box).apply_inverse(p);
}

std::array<Point3, 8> box_corners(const Box3D& box) {
  const Pose2 pose = box_pose(box);
  const double hl = box.size.length / 2.0;
  const double hw = box.size.width / 2.0;
  const double hh = box.size.height / 2.0;
  std::array<Point3, 8> out{};
  std::size_t i = 0;
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      for (double sz : {-1.0, 1.0}) {
        out[i++] = pose.apply(Point3{sx * hl, sy * hw, sz * hh});
      }
    }
  }
  return out;
}

std::vector<bool> points_in_box(std::span<const Point3> points, const Box3D& box) {
  const Pose2 pose = box_pose(box);
  const double hl = box.size.length / 2.0;
  const double hw = box.size.width / 2.0;
  const double hh = box.size.height / 2.0;
  std::vector<bool> mask(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point3 local = pose.apply_inverse(points[i]);
    mask[i] = std::abs(local.x) <= hl && std::abs(local.y) <= hw && std::abs(local.z) <= hh;
  }
  return mask;
}

std::vector<bool> points_in_box(const PointCloud& cloud, const Box3D& box) {
  return points_in_box(cloud.points, box);
}

std::size_t count_points_in_box(std::span<const Point3> points, const Box3D& box) {
  const auto mask = points_in_box(points, box);
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

PointCloud select_points(const PointCloud& cloud, const std::vector<bool>& mask) {
  PointCloud out;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (mask[i]) {
      out.points.push_back(cloud.points[i]);
      rows.push_back(static_cast<Eigen::Index>(i));
    }
  }
  if (cloud.features) {
    Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), cloud.features->cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      f.row(static_cast<Eigen::Index>(r)) = cloud.features->row(rows[r]);
    }
    out.features = std::move(f);
  }
  return out;
}

PointCloud crop_box(const PointCloud& cloud, const Box3D& box) {
  return select_points(cloud, points_in_box(cloud, box));
}

PointCloud crop_template(const PointCloud& cloud, const Box3D& box, double extend_ratio) {
  if (extend_ratio < 0.0) throw std::invalid_argument("extend_ratio must be >= 0");
  Box3D extended = box;
  const double scale = 1.0 + extend_ratio;
  extended.size = {box.size.length * scale, box.size.width * scale, box.size.height * scale};
  return crop_box(cloud, extended);
}

Box3D enlarge_box(const Box3D& box, double margin_m) {
  if (margin_m < 0.0) throw std::invalid_argument("margin must be >= 0");
  Box3D out = box;
  out.size = {box.size.length + 2.0 * margin_m, box.size.width + 2.0 * margin_m,
              box.size.height + 2.0 * margin_m};
  return out;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto subject = footprint(a);
  const auto clipper = footprint(b);
  std::vector<Vec2> poly(subject.begin(), subject.end());
  // Sutherland-Hodgman against each CCW clipper edge; "inside" is the left side.
  for (std::size_t e = 0; e < 4 && !poly.empty(); ++e) {
    const Vec2& ea = clipper[e];
    const Vec2& eb = clipper[(e + 1) % 4];
    std::vector<Vec2> next;
    next.reserve(poly.size() + 4);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& cur = poly[i];
      const Vec2& prev = poly[(i + poly.size() - 1) % poly.size()];
      const bool cur_in = cross(ea, eb, cur) >= 0.0;
      const bool prev_in = cross(ea, eb, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) next.push_back(segment_line_intersection(prev, cur, ea, eb));
        next.push_back(cur);
      } else if (prev_in) {
        next.push_back(segment_line_intersection(prev, cur, ea, eb));
      }
    }
    poly = std::move(next);
  }
  return polygon_area(poly);
}

double box_iou_3d(const Box3D& a, const Box3D& b) {
  const double z_lo = std::max(a.center.z - a.size.height / 2.0, b.center.z - b.size.height / 2.0);
  const double z_hi = std::min(a.center.z + a.size.height / 2.0, b.center.z + b.size.height / 2.0);
  const double z_overlap = std::max(0.0, z_hi - z_lo);
  if (z_overlap <= 0.0) return 0.0;
  // Clipping is not bitwise symmetric; evaluate in a canonical order so iou(a,b) == iou(b,a).
  const bool swap = b.to_array() < a.to_array();
  const double area = swap ? bev_intersection_area(b, a) : bev_intersection_area(a, b);
  const double inter = area * z_overlap;
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::vector<int>> ball_query(std::span<const Point3> queries,
                                         std::span<const Point3> cloud, double radius,
                                         std::size_t max_k) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball_query radius must be > 0");
  if (max_k < 1) throw std::invalid_argument("ball_query max_k must be >= 1");
  const double r2 = radius * radius;
  std::vector<std::vector<int>> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto& hits = out[q];
    for (std::size_t i = 0; i < cloud.size() && hits.size() < max_k; ++i) {
      if (squared_distance(queries[q], cloud[i]) <= r2) hits.push_back(static_cast<int>(i));
    }
  }
  return out;
}

Box3D distort_box(const Box3D& box, double range_m, Rng& rng) {
  if (range_m < 0.0) throw std::invalid_argument("distortion range must be >= 0");
  if (range_m == 0.0) return box;
  std::uniform_real_distribution<double> u(-range_m, range_m);
  Box3D out = box;
  out.center.x += u(rng);
  out.center.y += u(rng);
  out.center.z += u(rng);
  return out;
}

Point3 centroid(std::span<const Point3> points) {
  Point3 c;
  if (points.empty()) return c;
  for (const auto& p : points) c = c + p;
  return c * (1.0 / static_cast<double>(points.size()));
}

}  // namespace pttr
