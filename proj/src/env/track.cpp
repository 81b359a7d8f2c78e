#include "caps/env/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "caps/util/errors.hpp"

namespace caps::env {

namespace {

using json = nlohmann::json;

constexpr double kClosureTolerance = 1e-6;

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

struct Tracer {
  Vec2 p;
  double heading = 0.0;

  // Position and heading after travelling `t` metres into `seg` from the current pose.
  Pose advance(const Segment& seg, double t) const {
    const double c = std::cos(heading), s = std::sin(heading);
    if (seg.kind == Segment::Kind::straight) return {{p.x + t * c, p.y + t * s}, heading};
    const double r = seg.radius;
    const double phi = t / r;
    if (seg.direction == TurnDirection::left) {
      const Vec2 center{p.x - r * s, p.y + r * c};
      const double h = heading + phi;
      return {{center.x + r * std::sin(h), center.y - r * std::cos(h)}, h};
    }
    const Vec2 center{p.x + r * s, p.y - r * c};
    const double h = heading - phi;
    return {{center.x - r * std::sin(h), center.y + r * std::cos(h)}, h};
  }
};

double signed_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

// Returns the vertex index of the first edge involved in a self-intersection, or -1.
int first_self_intersection(const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  // Bounding boxes sorted by min x for a sweep.
  struct Box {
    double x0, x1, y0, y1;
    std::size_t edge;
  };
  std::vector<Box> boxes(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % n];
    boxes[i] = {std::min(a.x, b.x), std::max(a.x, b.x), std::min(a.y, b.y), std::max(a.y, b.y), i};
  }
  std::sort(boxes.begin(), boxes.end(), [](const Box& l, const Box& r) {
    return l.x0 < r.x0 || (l.x0 == r.x0 && l.edge < r.edge);
  });
  int worst = -1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n && boxes[j].x0 <= boxes[i].x1; ++j) {
      const std::size_t e1 = boxes[i].edge, e2 = boxes[j].edge;
      const std::size_t d = e1 > e2 ? e1 - e2 : e2 - e1;
      if (d <= 1 || d == n - 1) continue;  // neighbours share a vertex
      if (boxes[j].y0 > boxes[i].y1 || boxes[i].y0 > boxes[j].y1) continue;
      if (segments_intersect(poly[e1], poly[(e1 + 1) % n], poly[e2], poly[(e2 + 1) % n])) {
        const int e = static_cast<int>(std::max(e1, e2));
        if (worst < 0 || e < worst) worst = e;
      }
    }
  }
  return worst;
}

std::string segment_label(int index) { return "segment " + std::to_string(index); }

void build_index(TrackSpec& t, double reach) {
  t.grid_reach = reach;
  t.grid_cell = std::max(0.25, reach / 2.0);
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const Vec2& v : t.centerline) {
    x0 = std::min(x0, v.x);
    y0 = std::min(y0, v.y);
    x1 = std::max(x1, v.x);
    y1 = std::max(y1, v.y);
  }
  t.grid_origin = {x0 - reach - t.grid_cell, y0 - reach - t.grid_cell};
  t.grid_cols = static_cast<int>(std::ceil((x1 - x0 + 2 * reach) / t.grid_cell)) + 3;
  t.grid_rows = static_cast<int>(std::ceil((y1 - y0 + 2 * reach) / t.grid_cell)) + 3;
  t.grid.assign(static_cast<std::size_t>(t.grid_cols) * t.grid_rows, {});
  const std::size_t n = t.centerline.size();
  for (std::size_t e = 0; e < n; ++e) {
    const Vec2 a = t.centerline[e], b = t.centerline[(e + 1) % n];
    const int c0 = static_cast<int>(std::floor((std::min(a.x, b.x) - reach - t.grid_origin.x) / t.grid_cell));
    const int c1 = static_cast<int>(std::floor((std::max(a.x, b.x) + reach - t.grid_origin.x) / t.grid_cell));
    const int r0 = static_cast<int>(std::floor((std::min(a.y, b.y) - reach - t.grid_origin.y) / t.grid_cell));
    const int r1 = static_cast<int>(std::floor((std::max(a.y, b.y) + reach - t.grid_origin.y) / t.grid_cell));
    for (int r = std::max(r0, 0); r <= std::min(r1, t.grid_rows - 1); ++r)
      for (int c = std::max(c0, 0); c <= std::min(c1, t.grid_cols - 1); ++c)
        t.grid[static_cast<std::size_t>(r) * t.grid_cols + c].push_back(static_cast<int>(e));
  }
}

double require_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  const json& v = j.at(key);
  if (!v.is_number()) throw ParseError(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace

CenterlineProjection TrackSpec::project(Vec2 p) const {
  const std::size_t n = centerline.size();
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_edge = 0;
  double best_t = 0.0;
  const auto consider = [&](std::size_t e) {
    const Vec2 a = centerline[e], b = centerline[(e + 1) % n];
    const double t = closest_param(a, b, p);
    const Vec2 q = a + t * (b - a);
    const double d = norm(p - q);
    if (d < best || (d == best && e < best_edge)) {
      best = d;
      best_edge = e;
      best_t = t;
    }
  };
  const int c = static_cast<int>(std::floor((p.x - grid_origin.x) / grid_cell));
  const int r = static_cast<int>(std::floor((p.y - grid_origin.y) / grid_cell));
  if (c >= 0 && c < grid_cols && r >= 0 && r < grid_rows) {
    for (int e : grid[static_cast<std::size_t>(r) * grid_cols + c]) consider(static_cast<std::size_t>(e));
  }
  if (!(best < grid_reach)) {
    best = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < n; ++e) consider(e);
  }
  const Vec2 a = centerline[best_edge], b = centerline[(best_edge + 1) % n];
  const double seg_len = norm(b - a);
  double s = centerline_s[best_edge] + best_t * seg_len;
  if (s >= length) s -= length;
  CenterlineProjection out;
  out.arc_length = s;
  out.distance = best;
  out.lateral = cross(b - a, p - a) >= 0 ? best : -best;
  return out;
}

double TrackSpec::distance_within_reach(Vec2 p) const {
  const int c = static_cast<int>(std::floor((p.x - grid_origin.x) / grid_cell));
  const int r = static_cast<int>(std::floor((p.y - grid_origin.y) / grid_cell));
  if (c < 0 || c >= grid_cols || r < 0 || r >= grid_rows) return grid_reach;
  const std::size_t n = centerline.size();
  double best2 = grid_reach * grid_reach;
  for (int ei : grid[static_cast<std::size_t>(r) * grid_cols + c]) {
    const std::size_t e = static_cast<std::size_t>(ei);
    const Vec2 a = centerline[e], b = centerline[(e + 1) % n];
    const double t = closest_param(a, b, p);
    const Vec2 d = p - (a + t * (b - a));
    best2 = std::min(best2, dot(d, d));
  }
  return std::sqrt(best2);
}

Pose TrackSpec::pose_at(double s) const {
  s = std::fmod(s, length);
  if (s < 0) s += length;
  Tracer tr;
  double acc = 0.0;
  for (const Segment& seg : segments) {
    const double len = seg.arc_length();
    if (s <= acc + len) return tr.advance(seg, s - acc);
    const Pose end = tr.advance(seg, len);
    tr.p = end.position;
    tr.heading = end.heading;
    acc += len;
  }
  return {tr.p, tr.heading};
}

bool TrackSpec::crosses_wall(Vec2 p0, Vec2 p1) const {
  const double x0 = std::min(p0.x, p1.x), x1 = std::max(p0.x, p1.x);
  const double y0 = std::min(p0.y, p1.y), y1 = std::max(p0.y, p1.y);
  for (const auto* wall : {&wall_inner, &wall_outer}) {
    const std::size_t n = wall->size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = (*wall)[i], b = (*wall)[(i + 1) % n];
      if (std::max(a.x, b.x) < x0 || std::min(a.x, b.x) > x1 || std::max(a.y, b.y) < y0 ||
          std::min(a.y, b.y) > y1)
        continue;
      if (segments_intersect(p0, p1, a, b)) return true;
    }
  }
  return false;
}

bool TrackSpec::inside(Vec2 p) const {
  const auto winding_inside = [](const std::vector<Vec2>& poly, Vec2 q) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
      const Vec2 a = poly[i], b = poly[j];
      if ((a.y > q.y) != (b.y > q.y) && q.x < (b.x - a.x) * (q.y - a.y) / (b.y - a.y) + a.x) in = !in;
    }
    return in;
  };
  return winding_inside(wall_outer, p) && !winding_inside(wall_inner, p);
}

TrackSpec build_track(std::vector<Segment> segments, double track_width, double start_offset,
                      int lap_count, const TrackBuildOptions& options) {
  if (segments.empty()) throw ValidationError("track has no segments");
  if (!(track_width > 0.0)) throw ValidationError("track_width must be positive");
  if (lap_count < 1) throw ValidationError("lap_count must be >= 1");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& seg = segments[i];
    const bool ok = seg.kind == Segment::Kind::straight
                        ? seg.length > 0.0
                        : seg.radius > 0.0 && seg.sweep_rad > 0.0 &&
                              seg.sweep_rad <= 2.0 * std::numbers::pi + 1e-12;
    if (!ok) throw ValidationError(segment_label(static_cast<int>(i)) + ": non-positive dimension");
    if (seg.kind == Segment::Kind::arc && seg.radius <= track_width / 2.0)
      throw ValidationError(segment_label(static_cast<int>(i)) +
                            ": radius must exceed half the track width");
  }

  TrackSpec t;
  t.segments = std::move(segments);
  t.track_width = track_width;
  t.lap_count = lap_count;

  // Trace the centerline.
  Tracer tr;
  double s = 0.0;
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    const Segment& seg = t.segments[i];
    const double len = seg.arc_length();
    const double step = seg.kind == Segment::Kind::arc ? options.max_arc_step : options.max_straight_step;
    const int pieces = std::max(seg.kind == Segment::Kind::arc ? 2 : 1, static_cast<int>(std::ceil(len / step)));
    for (int k = 0; k < pieces; ++k) {
      const Pose pose = tr.advance(seg, len * k / pieces);
      t.centerline.push_back(pose.position);
      t.centerline_s.push_back(s + len * k / pieces);
      t.vertex_segment.push_back(static_cast<int>(i));
    }
    const Pose end = tr.advance(seg, len);
    tr.p = end.position;
    tr.heading = end.heading;
    s += len;
  }
  t.length = s;
  const double gap = norm(tr.p);
  const double turn = std::fabs(wrap_angle(tr.heading));
  if (gap > kClosureTolerance || turn > kClosureTolerance) {
    std::ostringstream msg;
    msg << segment_label(static_cast<int>(t.segments.size()) - 1) << ": loop not closed (gap "
        << gap << " m, heading error " << turn << " rad)";
    throw ValidationError(msg.str());
  }

  // Offset walls along the left normal of each vertex's tangent.
  const std::size_t n = t.centerline.size();
  std::vector<Vec2> left(n), right(n);
  {
    Tracer walk;
    double seg_start = 0.0;
    std::size_t v = 0;
    for (std::size_t i = 0; i < t.segments.size(); ++i) {
      const Segment& seg = t.segments[i];
      for (; v < n && t.vertex_segment[v] == static_cast<int>(i); ++v) {
        const Pose pose = walk.advance(seg, t.centerline_s[v] - seg_start);
        const Vec2 normal{-std::sin(pose.heading), std::cos(pose.heading)};
        left[v] = pose.position + (track_width / 2.0) * normal;
        right[v] = pose.position - (track_width / 2.0) * normal;
      }
      const Pose end = walk.advance(seg, seg.arc_length());
      walk.p = end.position;
      walk.heading = end.heading;
      seg_start += seg.arc_length();
    }
  }
  const bool left_is_inner = std::fabs(signed_area(left)) < std::fabs(signed_area(right));
  t.wall_inner = left_is_inner ? left : right;
  t.wall_outer = left_is_inner ? right : left;
  for (const auto* wall : {&t.wall_inner, &t.wall_outer}) {
    const int bad = first_self_intersection(*wall);
    if (bad >= 0) {
      throw ValidationError(segment_label(t.vertex_segment[static_cast<std::size_t>(bad)]) +
                            ": wall polyline self-intersects");
    }
  }
  // Distinct parts of the track must not overlap: inner and outer walls may not cross.
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = t.wall_inner[i], b = t.wall_inner[(i + 1) % n];
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 c = t.wall_outer[j], d = t.wall_outer[(j + 1) % n];
      if (std::max(a.x, b.x) < std::min(c.x, d.x) || std::max(c.x, d.x) < std::min(a.x, b.x) ||
          std::max(a.y, b.y) < std::min(c.y, d.y) || std::max(c.y, d.y) < std::min(a.y, b.y))
        continue;
      if (segments_intersect(a, b, c, d))
        throw ValidationError(segment_label(t.vertex_segment[i]) + ": walls cross each other");
    }
  }

  t.start_offset = std::fmod(start_offset, t.length);
  if (t.start_offset < 0) t.start_offset += t.length;
  t.start_pose = t.pose_at(t.start_offset);
  const Vec2 normal{-std::sin(t.start_pose.heading), std::cos(t.start_pose.heading)};
  t.lap_line = {t.start_pose.position + (track_width / 2.0) * normal,
                t.start_pose.position - (track_width / 2.0) * normal};
  build_index(t, track_width / 2.0 + options.index_reach);
  if (!t.inside(t.start_pose.position)) throw ValidationError("start pose is not between the walls");
  return t;
}

TrackSpec load_track(std::string_view spec_text, const TrackBuildOptions& options) {
  json doc;
  try {
    doc = json::parse(spec_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("track file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("track file must be a JSON object");
  const double width = require_number(doc, "track_width", "track");
  const double start_offset = doc.contains("start_offset") ? require_number(doc, "start_offset", "track") : 0.0;
  int laps = 1;
  if (doc.contains("lap_count")) {
    if (!doc["lap_count"].is_number_integer()) throw ParseError("track: field 'lap_count' must be an integer");
    laps = doc["lap_count"].get<int>();
  }
  if (!doc.contains("segments") || !doc["segments"].is_array())
    throw ParseError("track: missing array field 'segments'");
  std::vector<Segment> segments;
  int index = 0;
  for (const json& js : doc["segments"]) {
    const std::string where = "track " + segment_label(index);
    if (!js.is_object() || !js.contains("kind") || !js["kind"].is_string())
      throw ParseError(where + ": missing string field 'kind'");
    const std::string kind = js["kind"].get<std::string>();
    if (kind == "straight") {
      segments.push_back(Segment::straight(require_number(js, "length", where)));
    } else if (kind == "arc") {
      const double radius = require_number(js, "radius", where);
      const double sweep = require_number(js, "sweep_deg", where) * std::numbers::pi / 180.0;
      if (!js.contains("direction") || !js["direction"].is_string())
        throw ParseError(where + ": missing string field 'direction'");
      const std::string dir = js["direction"].get<std::string>();
      if (dir != "left" && dir != "right")
        throw ParseError(where + ": direction must be \"left\" or \"right\"");
      segments.push_back(Segment::arc(radius, sweep, dir == "left" ? TurnDirection::left : TurnDirection::right));
    } else {
      throw ParseError(where + ": unknown kind '" + kind + "'");
    }
    ++index;
  }
  return build_track(std::move(segments), width, start_offset, laps, options);
}

TrackSpec load_track_file(const std::string& path, const TrackBuildOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open track file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_track(buffer.str(), options);
}

std::string_view default_track_json() {
  // Straight, hairpin pair, square corner pair, back straight, s-curve, closing hairpin.
  // The back straight (8 - 2*sqrt(2)) and final radius (1.5 + sqrt(2)) close the loop.
  static constexpr std::string_view text = R"({
  "track_width": 1.0,
  "start_offset": 1.0,
  "lap_count": 1,
  "segments": [
    {"kind": "straight", "length": 8.0},
    {"kind": "arc", "radius": 1.0, "sweep_deg": 180.0, "direction": "left"},
    {"kind": "arc", "radius": 1.0, "sweep_deg": 180.0, "direction": "right"},
    {"kind": "arc", "radius": 1.5, "sweep_deg": 90.0, "direction": "left"},
    {"kind": "arc", "radius": 1.5, "sweep_deg": 90.0, "direction": "left"},
    {"kind": "straight", "length": 5.17157287525381},
    {"kind": "arc", "radius": 2.0, "sweep_deg": 45.0, "direction": "left"},
    {"kind": "arc", "radius": 2.0, "sweep_deg": 45.0, "direction": "right"},
    {"kind": "arc", "radius": 2.91421356237310, "sweep_deg": 180.0, "direction": "left"}
  ]
}
)";
  return text;
}

TrackInventory inventory(const TrackSpec& track) {
  TrackInventory inv;
  const auto near = [](double a, double deg) { return std::fabs(a - deg * std::numbers::pi / 180.0) < 1e-9; };
  const auto& segs = track.segments;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const Segment& s = segs[i];
    if (s.kind == Segment::Kind::straight) {
      ++inv.straights;
    } else if (near(s.sweep_rad, 90.0)) {
      ++inv.square_corners;
    } else if (near(s.sweep_rad, 180.0)) {
      ++inv.hairpins;
    } else if (i + 1 < segs.size()) {
      const Segment& nx = segs[i + 1];
      if (nx.kind == Segment::Kind::arc && nx.direction != s.direction &&
          std::fabs(nx.sweep_rad - s.sweep_rad) < 1e-9 && s.sweep_rad < std::numbers::pi / 2.0) {
        ++inv.s_curves;
        ++i;
      }
    }
  }
  return inv;
}

}  // namespace caps::env
