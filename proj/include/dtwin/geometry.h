#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace dtwin {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double k) { return {a.x * k, a.y * k}; }
  friend Vec2 operator*(double k, Vec2 a) { return {a.x * k, a.y * k}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Wraps an angle into (-pi, pi].
double normalize_angle(double radians);

/// Planar pose in the world frame (x east, y north, heading CCW from +x).
/// The heading is kept in (-pi, pi] across every mutation.
class Pose2D {
 public:
  Pose2D() = default;
  Pose2D(double x, double y, double heading)
      : x_(x), y_(y), heading_(normalize_angle(heading)) {}

  double x() const { return x_; }
  double y() const { return y_; }
  double heading() const { return heading_; }
  Vec2 position() const { return {x_, y_}; }
  Vec2 forward() const { return {std::cos(heading_), std::sin(heading_)}; }

  void set_position(Vec2 p) {
    x_ = p.x;
    y_ = p.y;
  }
  void set_heading(double heading) { heading_ = normalize_angle(heading); }

  friend bool operator==(const Pose2D&, const Pose2D&) = default;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double heading_ = 0.0;
};

using Polyline = std::vector<Vec2>;

/// Arc length from the path start to the orthogonal projection of `point`
/// onto the closest segment. Throws Error("degenerate path") when every
/// vertex coincides or fewer than two points are given.
double arc_length_along(std::span<const Vec2> path, Vec2 point);

/// Total length of a polyline.
double path_length(std::span<const Vec2> path);

/// Point and tangent heading at arc length `s`, clamped to [0, length].
Pose2D pose_at_arc_length(std::span<const Vec2> path, double s);

/// Signed lateral offset of `point` from the path (positive = left of travel).
double lateral_offset(std::span<const Vec2> path, Vec2 point);

/// Corners of a length x width rectangle centered on `pose`, CCW order.
std::array<Vec2, 4> footprint_corners(const Pose2D& pose, double length,
                                      double width);

/// Separating-axis overlap test between two convex polygons. Touching
/// boundaries count as overlap.
bool convex_overlap(std::span<const Vec2> a, std::span<const Vec2> b);

/// Euclidean separation of two convex polygons; 0 when they overlap.
double convex_gap(std::span<const Vec2> a, std::span<const Vec2> b);

bool point_in_convex(std::span<const Vec2> polygon, Vec2 p);

bool is_convex(std::span<const Vec2> polygon);

}  // namespace dtwin
