#include "dtwin/geometry.h"

#include <algorithm>
#include <limits>

#include "dtwin/error.h"

namespace dtwin {

double normalize_angle(double radians) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::remainder(radians, kTwoPi);
  if (a <= -std::numbers::pi) { a += kTwoPi; }
  return a;
}

namespace {

struct Projection {
  double s = 0.0;
  double dist = std::numeric_limits<double>::infinity();
  std::size_t segment = 0;
  double t = 0.0;
};

void require_nondegenerate(std::span<const Vec2> path) {
  if (path.size() < 2) { throw Error("degenerate path"); }
  const bool all_same = std::all_of(path.begin(), path.end(),
                                    [&](Vec2 p) { return p == path.front(); });
  if (all_same) { throw Error("degenerate path"); }
}

Projection project(std::span<const Vec2> path, Vec2 point) {
  require_nondegenerate(path);
  Projection best;
  double walked = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 a = path[i];
    const Vec2 ab = path[i + 1] - a;
    const double len2 = dot(ab, ab);
    const double len = std::sqrt(len2);
    if (len2 == 0.0) { continue; }
    const double t = std::clamp(dot(point - a, ab) / len2, 0.0, 1.0);
    const double d = distance(point, a + ab * t);
    // Strict '<' keeps the earliest segment on ties (shared vertices).
    if (d < best.dist) { best = {walked + t * len, d, i, t}; }
    walked += len;
  }
  return best;
}

double segment_point_distance(Vec2 a, Vec2 b, Vec2 p) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) { return distance(a, p); }
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

}  // namespace

double arc_length_along(std::span<const Vec2> path, Vec2 point) {
  return project(path, point).s;
}

double path_length(std::span<const Vec2> path) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    total += distance(path[i], path[i + 1]);
  }
  return total;
}

Pose2D pose_at_arc_length(std::span<const Vec2> path, double s) {
  require_nondegenerate(path);
  double walked = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Vec2 ab = path[i + 1] - path[i];
    const double len = norm(ab);
    if (len == 0.0) { continue; }
    last = i;
    if (s <= walked + len || i + 2 == path.size()) {
      const double t = std::clamp((s - walked) / len, 0.0, 1.0);
      const Vec2 p = path[i] + ab * t;
      return {p.x, p.y, std::atan2(ab.y, ab.x)};
    }
    walked += len;
  }
  const Vec2 ab = path[last + 1] - path[last];
  return {path.back().x, path.back().y, std::atan2(ab.y, ab.x)};
}

double lateral_offset(std::span<const Vec2> path, Vec2 point) {
  const Projection p = project(path, point);
  const Vec2 a = path[p.segment];
  const Vec2 ab = path[p.segment + 1] - a;
  const double side = cross(ab, point - a);
  return side >= 0.0 ? p.dist : -p.dist;
}

std::array<Vec2, 4> footprint_corners(const Pose2D& pose, double length,
                                      double width) {
  const Vec2 f = pose.forward() * (0.5 * length);
  const Vec2 l = Vec2{-pose.forward().y, pose.forward().x} * (0.5 * width);
  const Vec2 c = pose.position();
  return {c + f + l, c - f + l, c - f - l, c + f - l};
}

bool convex_overlap(std::span<const Vec2> a, std::span<const Vec2> b) {
  auto separated_on_edges_of = [](std::span<const Vec2> p,
                                  std::span<const Vec2> q) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Vec2 e = p[(i + 1) % p.size()] - p[i];
      const Vec2 axis{-e.y, e.x};
      double pmin = std::numeric_limits<double>::infinity();
      double pmax = -pmin;
      double qmin = pmin;
      double qmax = -pmin;
      for (Vec2 v : p) {
        pmin = std::min(pmin, dot(v, axis));
        pmax = std::max(pmax, dot(v, axis));
      }
      for (Vec2 v : q) {
        qmin = std::min(qmin, dot(v, axis));
        qmax = std::max(qmax, dot(v, axis));
      }
      if (pmax < qmin || qmax < pmin) { return true; }
    }
    return false;
  };
  return !separated_on_edges_of(a, b) && !separated_on_edges_of(b, a);
}

double convex_gap(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (convex_overlap(a, b)) { return 0.0; }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 a0 = a[i];
    const Vec2 a1 = a[(i + 1) % a.size()];
    for (Vec2 v : b) { best = std::min(best, segment_point_distance(a0, a1, v)); }
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    const Vec2 b0 = b[i];
    const Vec2 b1 = b[(i + 1) % b.size()];
    for (Vec2 v : a) { best = std::min(best, segment_point_distance(b0, b1, v)); }
  }
  return best;
}

bool point_in_convex(std::span<const Vec2> polygon, Vec2 p) {
  bool has_pos = false;
  bool has_neg = false;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const double c =
        cross(polygon[(i + 1) % polygon.size()] - polygon[i], p - polygon[i]);
    has_pos |= c > 0.0;
    has_neg |= c < 0.0;
  }
  return !(has_pos && has_neg);
}

bool is_convex(std::span<const Vec2> polygon) {
  if (polygon.size() < 3) { return false; }
  int sign = 0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[(i + 1) % polygon.size()];
    const Vec2 c = polygon[(i + 2) % polygon.size()];
    const double z = cross(b - a, c - b);
    if (z == 0.0) { continue; }
    const int s = z > 0.0 ? 1 : -1;
    if (sign == 0) {
      sign = s;
    } else if (s != sign) {
      return false;
    }
  }
  return sign != 0;
}

}  // namespace dtwin
