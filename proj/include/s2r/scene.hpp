#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "s2r/common.hpp"
#include "s2r/geom.hpp"

namespace s2r::scene {

using geom::Aabb;
using geom::RigidPose;
using geom::Vec3;

enum class Asset { box, cylinder, bin, plug, distractor };

std::string_view asset_name(Asset a);
Asset parse_asset(std::string_view name);

/// Wall and floor thickness of bin assets (m).
inline constexpr double kBinWall = 0.01;

/// A placed primitive asset. Objects are oriented boxes; constraint checks use
/// their conservative world AABB.
struct ObjectInstance {
  std::string id;
  Asset asset = Asset::box;
  RigidPose pose;
  Vec3 half_extents = Vec3::Constant(0.05);
  double scale = 1.0;

  void validate() const;
  Vec3 scaled_half_extents() const { return half_extents * scale; }
  Aabb aabb() const;
  /// Height at which objects placed inside/on this one rest.
  double support_height() const;
  /// Usable xy region for "inside" relations: the cavity of a bin, else the AABB.
  Aabb support_footprint() const;
  /// Solid parts: floor and four walls for a bin, the whole box otherwise.
  std::vector<geom::Obb> solid_parts() const;
  /// World AABBs of solid_parts().
  std::vector<Aabb> collision_boxes() const;
};

enum class ConstraintKind {
  scale,
  pose2D,
  pose3D,
  place_on_surface,
  place_left_edge,
  place_right_edge,
  place_top_edge,
  place_bottom_edge,
  place_to_left,
  place_to_right,
  place_in_right,
  place_behind,
  place_front_left,
  place_front_right,
  place_back_left,
  place_back_right,
  random_placement,
  no_overlapping,
  with_obstacles,
};

inline constexpr int kConstraintKindCount = 19;
const std::vector<ConstraintKind>& all_constraint_kinds();
std::string_view kind_name(ConstraintKind k);
std::optional<ConstraintKind> parse_kind(std::string_view name);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v, double tol = 1e-9) const { return v >= lo - tol && v <= hi + tol; }
};

/// One spatial relation. Range keys: `s` (scale), `x`, `y`, `z` (m) and
/// `yaw` (degrees, compared modulo 360).
struct Constraint {
  ConstraintKind kind = ConstraintKind::pose2D;
  std::vector<std::string> subjects;
  std::vector<std::string> obstacles;
  std::optional<std::string> reference;
  std::map<std::string, Range> ranges;

  /// Throws ArityError / InvalidArgument.
  void validate() const;
  /// Every object the constraint places (subjects, then obstacles).
  std::vector<std::string> placed_ids() const;
  std::string to_string() const;
};

Constraint parse_constraint(const std::string& line);

struct SceneLayout {
  std::vector<ObjectInstance> objects;
  Aabb workspace;
  std::vector<Constraint> constraints;
  std::uint64_t seed = 0;

  const ObjectInstance* find(std::string_view id) const;
  ObjectInstance* find(std::string_view id);
  /// Throws UnknownId when missing.
  const ObjectInstance& at(std::string_view id) const;
  ObjectInstance& at(std::string_view id);
};

/// Edge-band width as a fraction of the reference extent.
inline constexpr double kEdgeBandFraction = 0.15;
/// Tolerance for the on-surface height match.
inline constexpr double kSurfaceTol = 1e-6;

/// Throws UnknownId / ArityError.
bool constraint_predicate(const Constraint& c, const SceneLayout& layout);

struct SolveOptions {
  int max_rejections = 1000;
  /// Per-object tries inside one attempt of a multi-object solver.
  int per_object_tries = 64;
};

/// Resamples the subjects of `c` until its predicate, every constraint already
/// in `layout.constraints`, and workspace containment hold; appends `c`.
/// Throws Infeasible after max_rejections attempts.
SceneLayout solve_constraint(const Constraint& c, const SceneLayout& layout, Rng& rng,
                             const SolveOptions& opts = {});

struct ObjectDecl {
  std::string id;
  Asset asset = Asset::box;
  Vec3 half_extents = Vec3::Constant(0.05);
  double scale = 1.0;
  /// x, y, z, yaw(rad). Unset objects start uniformly inside the workspace.
  std::optional<std::array<double, 4>> fixed_pose;
};

struct TaskSpec {
  Aabb workspace = Aabb(Vec3(-0.5, -0.5, 0.0), Vec3(0.5, 0.5, 0.5));
  std::vector<ObjectDecl> objects;
  std::vector<Constraint> constraints;
};

/// Line-oriented scene spec:
///   workspace x0 y0 z0 x1 y1 z1
///   object <id> <asset> hx hy hz [pose=x,y,z,yaw_deg] [scale=s]
///   <constraint kind> <subjects,...> [obstacles,...] [reference] [key=[lo,hi]]...
TaskSpec parse_task_spec(const std::string& text);
std::string task_spec_to_string(const TaskSpec& spec);

/// Deterministic per seed. Throws Infeasible, CyclicReference, UnknownId.
SceneLayout generate_layout(const TaskSpec& spec, std::uint64_t seed, const SolveOptions& opts = {});

struct ConstraintResult {
  std::size_t index = 0;
  std::string text;
  bool pass = false;
};

struct ValidationReport {
  std::vector<ConstraintResult> constraints;
  std::vector<std::string> outside_workspace;
  bool containment_ok() const { return outside_workspace.empty(); }
  bool passed() const;
};

ValidationReport validate_layout(const SceneLayout& layout);

std::string layout_to_string(const SceneLayout& layout);
SceneLayout parse_layout(const std::string& text);

/// The deep-bin sorting scene: table, central bin, two adjacent bins, a plug
/// and `n_distractors` (0-3) distractors inside the central bin. With
/// `skewed_yaw` the plug yaw range is [0, 180] deg; otherwise the full circle.
TaskSpec sorting_task_spec(int n_distractors = 3, bool skewed_yaw = true);
/// Cup-placement scene: table, cup, coaster.
TaskSpec cup_place_task_spec();

}  // namespace s2r::scene
