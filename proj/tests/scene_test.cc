#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <doctest.h>

#include "dtwin/error.h"
#include "dtwin/scene.h"

using namespace dtwin;

namespace {

// Exact overlap oracle independent of the separating-axis code: two convex
// polygons overlap iff an edge pair intersects or one contains a vertex of
// the other.
bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  auto orient = [](Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); };
  auto on_seg = [](Vec2 a, Vec2 b, Vec2 c) {
    return std::min(a.x, b.x) - 1e-12 <= c.x && c.x <= std::max(a.x, b.x) + 1e-12 &&
           std::min(a.y, b.y) - 1e-12 <= c.y && c.y <= std::max(a.y, b.y) + 1e-12;
  };
  const double d1 = orient(q1, q2, p1), d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1), d4 = orient(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (d1 == 0 && on_seg(q1, q2, p1)) || (d2 == 0 && on_seg(q1, q2, p2)) ||
         (d3 == 0 && on_seg(p1, p2, q1)) || (d4 == 0 && on_seg(p1, p2, q2));
}

bool inside_rect(const std::array<Vec2, 4>& r, Vec2 p) {
  for (int i = 0; i < 4; ++i) {
    if (cross(r[(i + 1) % 4] - r[i], p - r[i]) < 0) { return false; }
  }
  return true;
}

bool edge_oracle(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (segments_intersect(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) {
        return true;
      }
    }
  }
  return inside_rect(a, b[0]) || inside_rect(b, a[0]);
}

// Point-sampling oracle: a fine grid over a's footprint tested against b.
bool grid_oracle(const VehicleState& a, const VehicleConfig& ca,
                 const VehicleState& b, const VehicleConfig& cb, int n) {
  const auto rb = footprint_corners(b.pose, cb.length, cb.width);
  const Vec2 f = a.pose.forward();
  const Vec2 l{-f.y, f.x};
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const double u = (static_cast<double>(i) / n - 0.5) * ca.length;
      const double v = (static_cast<double>(j) / n - 0.5) * ca.width;
      if (inside_rect(rb, a.pose.position() + f * u + l * v)) { return true; }
    }
  }
  return false;
}

VehicleState at(double x, double y, double h) {
  VehicleState s;
  s.pose = Pose2D(x, y, h);
  return s;
}

}  // namespace

TEST_CASE("heading stays in (-pi, pi]") {
  CHECK(Pose2D(0, 0, 3 * std::numbers::pi).heading() ==
        doctest::Approx(std::numbers::pi));
  CHECK(Pose2D(0, 0, -std::numbers::pi).heading() ==
        doctest::Approx(std::numbers::pi));
  Pose2D p;
  p.set_heading(-3 * std::numbers::pi / 2);
  CHECK(p.heading() == doctest::Approx(std::numbers::pi / 2));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 1000; ++i) {
    const double h = Pose2D(0, 0, u(rng)).heading();
    CHECK(h > -std::numbers::pi);
    CHECK(h <= std::numbers::pi);
  }
}

TEST_CASE("arc_length_along examples") {
  const Polyline straight{{0, 0}, {200, 0}};
  CHECK(arc_length_along(straight, {110.21, 0.3}) == doctest::Approx(110.21));
  CHECK(arc_length_along(straight, {0, 0}) == 0.0);
  const Polyline bend{{0, 0}, {100, 0}, {100, 100}};
  CHECK(arc_length_along(bend, {100, 37}) == doctest::Approx(137.0));
  CHECK(arc_length_along(straight, {-50, 3}) == 0.0);
  CHECK(arc_length_along(straight, {500, 3}) == doctest::Approx(200.0));
}

TEST_CASE("arc_length_along degenerate path") {
  const Polyline same{{1, 1}, {1, 1}, {1, 1}};
  CHECK_THROWS_WITH_AS(arc_length_along(same, {0, 0}), "degenerate path", Error);
  const Polyline one{{1, 1}};
  CHECK_THROWS_WITH_AS(arc_length_along(one, {0, 0}), "degenerate path", Error);
}

TEST_CASE("arc_length_along is monotone along the path") {
  const Polyline bend{{0, 0}, {100, 0}, {100, 100}, {0, 150}};
  const double total = path_length(bend);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-0.4, 0.4);
  double prev = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double s = total * i / 2000.0;
    const Pose2D p = pose_at_arc_length(bend, s);
    const Vec2 q = p.position() + Vec2{-p.forward().y, p.forward().x} * jitter(rng);
    const double on = arc_length_along(bend, p.position());
    CHECK(on >= prev - 1e-9);
    CHECK(on == doctest::Approx(s).epsilon(1e-9));
    prev = on;
    // Off the path the projection may hop across a corner; for turns up to
    // 120 deg the hop is at most offset * tan(60 deg).
    const double got = arc_length_along(bend, q);
    CHECK(std::abs(got - s) <= 0.4 * std::sqrt(3.0) + 1e-9);
    CHECK(got >= 0.0);
    CHECK(got <= total + 1e-9);
  }
}

TEST_CASE("collision_check examples") {
  VehicleConfig c;
  const VehicleState a = at(0, 0, 0);
  CHECK(collision_check(a, c, a, c));
  CHECK_FALSE(collision_check(a, c, at(0, c.width + 1.0, 0), c));

  // b crosses a's nose: its extent along a's axis is its half width.
  const VehicleState b = at(c.length / 2 + c.width / 2 - 0.1, 0, std::numbers::pi / 2);
  CHECK(grid_oracle(a, c, b, c, 400));
  CHECK(collision_check(a, c, b, c));
  const VehicleState b_clear =
      at(c.length / 2 + c.width / 2 + 0.1, 0, std::numbers::pi / 2);
  CHECK_FALSE(grid_oracle(a, c, b_clear, c, 400));
  CHECK_FALSE(collision_check(a, c, b_clear, c));
}

TEST_CASE("collision_check agrees with the edge-intersection oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-8, 8);
  std::uniform_real_distribution<double> ang(-4, 4);
  std::uniform_real_distribution<double> dim(1.0, 6.0);
  int hits = 0;
  for (int i = 0; i < 5000; ++i) {
    VehicleConfig ca, cb;
    ca.width = dim(rng);
    ca.length = ca.width + dim(rng);
    cb.width = dim(rng);
    cb.length = cb.width + dim(rng);
    const VehicleState a = at(pos(rng), pos(rng), ang(rng));
    const VehicleState b = at(pos(rng), pos(rng), ang(rng));
    const bool want = edge_oracle(footprint_corners(a.pose, ca.length, ca.width),
                                  footprint_corners(b.pose, cb.length, cb.width));
    CHECK(collision_check(a, ca, b, cb) == want);
    CHECK(collision_check(b, cb, a, ca) == collision_check(a, ca, b, cb));
    if (want) {
      CHECK(footprint_gap(a, ca, b, cb) == 0.0);
    } else {
      CHECK(footprint_gap(a, ca, b, cb) > 0.0);
    }
    hits += want;
  }
  CHECK(hits > 500);
  CHECK(hits < 4500);
}

TEST_CASE("footprint_gap of parallel separated boxes") {
  VehicleConfig c;
  CHECK(footprint_gap(at(0, 0, 0), c, at(0, c.width + 1.0, 0), c) ==
        doctest::Approx(1.0));
  CHECK(footprint_gap(at(0, 0, 0), c, at(c.length + 2.5, 0, 0), c) ==
        doctest::Approx(2.5));
}

TEST_CASE("clamp_command examples") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  ControlCommand raw{1.7, -0.2, 0.5};
  ControlCommand c = clamp_command(raw);
  CHECK(c.steering == 1.0);
  CHECK(c.throttle == 0.0);
  CHECK(c.brake == 0.5);

  c = clamp_command({});
  CHECK(c.steering == 0.0);
  CHECK(c.throttle == 0.0);
  CHECK(c.brake == 0.0);

  c = clamp_command({nan, 0.5, nan});
  CHECK(c.steering == 0.0);
  CHECK(c.throttle == 0.5);
  CHECK(c.brake == 0.0);

  raw.seq = 9;
  raw.timestamp = 123;
  c = clamp_command(raw);
  CHECK(c.seq == 9);
  CHECK(c.timestamp == 123);
}

TEST_CASE("clamp_command is idempotent") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 1000; ++i) {
    ControlCommand raw{u(rng), u(rng), u(rng)};
    if (i % 10 == 0) { raw.steering = std::numeric_limits<double>::infinity(); }
    const ControlCommand once = clamp_command(raw);
    CHECK(clamp_command(once) == once);
    CHECK(once.steering >= -1.0);
    CHECK(once.steering <= 1.0);
    CHECK(once.throttle >= 0.0);
    CHECK(once.throttle <= 1.0);
    CHECK(once.brake >= 0.0);
    CHECK(once.brake <= 1.0);
  }
}

TEST_CASE("vehicle config validation") {
  VehicleConfig c;
  CHECK_NOTHROW(c.validate());
  c.length = c.wheelbase;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.b_max = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.drag_coeff = -0.1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("road network json") {
  const RoadNetwork net = load_road_network(DTWIN_SOURCE_DIR "/maps/research_dr.json");
  CHECK_FALSE(net.lanes.empty());
  CHECK_FALSE(net.intersections.empty());
  CHECK_NOTHROW(net.validate());
  const RoadNetwork back = road_network_from_json(to_json(net));
  REQUIRE(back.lanes.size() == net.lanes.size());
  CHECK(back.lanes[0].centerline == net.lanes[0].centerline);
  CHECK(back.intersections == net.intersections);

  nlohmann::json bad = to_json(net);
  bad["intersections"] = {{{0, 0}, {10, 0}, {2, 2}, {0, 10}}};
  CHECK_THROWS_AS(road_network_from_json(bad).validate(), Error);
  bad = to_json(net);
  bad["lanes"][0]["centerline"] = {{0, 0}};
  CHECK_THROWS_AS(road_network_from_json(bad).validate(), Error);
}
