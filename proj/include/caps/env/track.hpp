#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "caps/env/geometry.hpp"

namespace caps::env {

enum class TurnDirection { left, right };

struct Segment {
  enum class Kind { straight, arc };
  Kind kind = Kind::straight;
  double length = 0.0;     // straight only, m
  double radius = 0.0;     // arc only, m
  double sweep_rad = 0.0;  // arc only, > 0
  TurnDirection direction = TurnDirection::left;

  static Segment straight(double length) { return {Kind::straight, length, 0.0, 0.0, {}}; }
  static Segment arc(double radius, double sweep_rad, TurnDirection dir) {
    return {Kind::arc, 0.0, radius, sweep_rad, dir};
  }
  double arc_length() const { return kind == Kind::straight ? length : radius * sweep_rad; }
};

// Result of projecting a point onto the closed centerline.
struct CenterlineProjection {
  double arc_length = 0.0;  // from the first segment's start, in [0, length)
  double lateral = 0.0;     // signed, positive to the left of travel
  double distance = 0.0;    // |lateral| up to polyline discretization
};

// Validated circuit with derived geometry.
//
// The centerline starts at the origin heading +x and is traced segment by
// segment. Wall polylines are the centerline offset by half the track width;
// `wall_inner` is the side enclosing the smaller area.
class TrackSpec {
 public:
  std::vector<Segment> segments;
  double track_width = 0.0;
  double start_offset = 0.0;  // arc length of the start/finish line
  int lap_count = 1;

  std::vector<Vec2> centerline;       // closed; last vertex connects to first
  std::vector<double> centerline_s;   // arc length at each vertex
  std::vector<int> vertex_segment;    // index of the segment each vertex belongs to
  std::vector<Vec2> wall_inner;
  std::vector<Vec2> wall_outer;
  Pose start_pose;
  LineSegment lap_line;
  double length = 0.0;

  // Built by load_track/build_track; not user-set.
  double grid_cell = 0.0;
  double grid_reach = 0.0;
  Vec2 grid_origin;
  int grid_cols = 0;
  int grid_rows = 0;
  std::vector<std::vector<int>> grid;  // centerline edge indices near each cell

  // Nearest point on the centerline. Uses the spatial index for points within
  // `grid_reach` of the centerline and falls back to a full scan otherwise.
  CenterlineProjection project(Vec2 p) const;

  // Distance to the centerline when it is below `grid_reach`; otherwise any
  // value >= grid_reach. Cheap; used by the renderer.
  double distance_within_reach(Vec2 p) const;

  // Pose on the centerline at arc length s (wrapped).
  Pose pose_at(double s) const;

  // Whether the segment p0p1 touches either wall polyline.
  bool crosses_wall(Vec2 p0, Vec2 p1) const;

  // Strictly between the walls.
  bool inside(Vec2 p) const;
};

struct TrackBuildOptions {
  double max_arc_step = 0.05;       // m between centerline vertices on arcs
  double max_straight_step = 0.25;  // m between vertices on straights
  double index_reach = 1.5;         // extra margin beyond half width for the spatial index
};

// Builds and validates a track from segments. Throws ValidationError naming
// the offending segment index.
TrackSpec build_track(std::vector<Segment> segments, double track_width, double start_offset,
                      int lap_count, const TrackBuildOptions& options = {});

// Parses the JSON track format. Throws ParseError for malformed fields and
// ValidationError for geometric violations.
TrackSpec load_track(std::string_view spec_text, const TrackBuildOptions& options = {});
TrackSpec load_track_file(const std::string& path, const TrackBuildOptions& options = {});

// JSON text of the bundled circuit: 2 straights, 2 square corners, 3 hairpins
// and one s-curve.
std::string_view default_track_json();

// Simple counts used to describe a layout.
struct TrackInventory {
  int straights = 0;
  int square_corners = 0;  // 90 degree arcs
  int hairpins = 0;        // 180 degree arcs
  int s_curves = 0;        // adjacent opposite-direction arcs of equal sweep
};
TrackInventory inventory(const TrackSpec& track);

}  // namespace caps::env
