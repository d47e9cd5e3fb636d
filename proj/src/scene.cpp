#include "s2r/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace s2r::scene {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
  double lo = -kInf;
  double hi = kInf;
  bool empty() const { return lo > hi; }
  Interval meet(Interval o) const { return {std::max(lo, o.lo), std::min(hi, o.hi)}; }
};

double sample(Rng& rng, Interval iv) { return iv.lo == iv.hi ? iv.lo : rng.uniform(iv.lo, iv.hi); }

bool yaw_in_range(double yaw_rad, const Range& r) {
  const double y = rad2deg(yaw_rad);
  constexpr double tol = 1e-7;
  return r.contains(y, tol) || r.contains(y + 360.0, tol) || r.contains(y - 360.0, tol);
}

bool is_unary(ConstraintKind k) {
  return k == ConstraintKind::scale || k == ConstraintKind::pose2D || k == ConstraintKind::pose3D;
}

bool is_multi(ConstraintKind k) {
  return k == ConstraintKind::random_placement || k == ConstraintKind::no_overlapping ||
         k == ConstraintKind::with_obstacles;
}

struct KindInfo {
  ConstraintKind kind;
  std::string_view name;
};

constexpr KindInfo kKinds[] = {
    {ConstraintKind::scale, "scale"},
    {ConstraintKind::pose2D, "pose2D"},
    {ConstraintKind::pose3D, "pose3D"},
    {ConstraintKind::place_on_surface, "place_on_surface"},
    {ConstraintKind::place_left_edge, "place_left_edge"},
    {ConstraintKind::place_right_edge, "place_right_edge"},
    {ConstraintKind::place_top_edge, "place_top_edge"},
    {ConstraintKind::place_bottom_edge, "place_bottom_edge"},
    {ConstraintKind::place_to_left, "place_to_left"},
    {ConstraintKind::place_to_right, "place_to_right"},
    {ConstraintKind::place_in_right, "place_in_right"},
    {ConstraintKind::place_behind, "place_behind"},
    {ConstraintKind::place_front_left, "place_front_left"},
    {ConstraintKind::place_front_right, "place_front_right"},
    {ConstraintKind::place_back_left, "place_back_left"},
    {ConstraintKind::place_back_right, "place_back_right"},
    {ConstraintKind::random_placement, "random_placement"},
    {ConstraintKind::no_overlapping, "no_overlapping"},
    {ConstraintKind::with_obstacles, "with_obstacles"},
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

// Directional half-plane tests on conservative AABBs (strict).
bool left_of(const Aabb& s, const Aabb& r) { return s.max.x() < r.min.x(); }
bool right_of(const Aabb& s, const Aabb& r) { return s.min.x() > r.max.x(); }
bool front_of(const Aabb& s, const Aabb& r) { return s.min.y() > r.max.y(); }
bool behind_of(const Aabb& s, const Aabb& r) { return s.max.y() < r.min.y(); }

bool xy_inside(const Aabb& inner, const Aabb& outer) {
  return inner.min.x() >= outer.min.x() && inner.max.x() <= outer.max.x() &&
         inner.min.y() >= outer.min.y() && inner.max.y() <= outer.max.y();
}

bool center_xy_inside(const Vec3& c, const Aabb& fp) {
  return c.x() >= fp.min.x() && c.x() <= fp.max.x() && c.y() >= fp.min.y() && c.y() <= fp.max.y();
}

// Edge bands: left = -x, right = +x, top = far side (-y), bottom = near side (+y).
bool in_edge_band(ConstraintKind k, const Vec3& c, const Aabb& fp) {
  if (!center_xy_inside(c, fp)) return false;
  const Vec3 ext = fp.extent();
  switch (k) {
    case ConstraintKind::place_left_edge: return c.x() <= fp.min.x() + kEdgeBandFraction * ext.x();
    case ConstraintKind::place_right_edge: return c.x() >= fp.max.x() - kEdgeBandFraction * ext.x();
    case ConstraintKind::place_top_edge: return c.y() <= fp.min.y() + kEdgeBandFraction * ext.y();
    case ConstraintKind::place_bottom_edge: return c.y() >= fp.max.y() - kEdgeBandFraction * ext.y();
    default: return false;
  }
}

bool inside_without_overlap(const std::vector<const ObjectInstance*>& objs, const ObjectInstance& ref,
                            bool require_disjoint) {
  const Aabb fp = ref.support_footprint();
  for (const auto* o : objs)
    if (!xy_inside(o->aabb(), fp)) return false;
  if (!require_disjoint) return true;
  for (std::size_t i = 0; i < objs.size(); ++i)
    for (std::size_t j = i + 1; j < objs.size(); ++j)
      if (geom::aabb_intersect(objs[i]->aabb(), objs[j]->aabb())) return false;
  return true;
}

Vec3 rotated_half(const ObjectInstance& o, const geom::Quat& q) {
  return q.toRotationMatrix().cwiseAbs() * o.scaled_half_extents();
}

void set_pose(ObjectInstance& o, const Vec3& t, const geom::Quat& q) { o.pose = RigidPose(t, q); }

/// Center bounds accumulated from pose2D / pose3D constraints already applied to `id`.
struct CenterBounds {
  Interval x, y, z;
};

CenterBounds prior_bounds(const SceneLayout& layout, const std::string& id) {
  CenterBounds b;
  for (const auto& c : layout.constraints) {
    if (c.kind != ConstraintKind::pose2D && c.kind != ConstraintKind::pose3D) continue;
    if (c.subjects.empty() || c.subjects.front() != id) continue;
    if (auto it = c.ranges.find("x"); it != c.ranges.end()) b.x = b.x.meet({it->second.lo, it->second.hi});
    if (auto it = c.ranges.find("y"); it != c.ranges.end()) b.y = b.y.meet({it->second.lo, it->second.hi});
    if (c.kind == ConstraintKind::pose3D)
      if (auto it = c.ranges.find("z"); it != c.ranges.end()) b.z = b.z.meet({it->second.lo, it->second.hi});
  }
  return b;
}

Interval workspace_axis(const Aabb& ws, const Vec3& e, int axis) {
  return {ws.min[axis] + e[axis], ws.max[axis] - e[axis]};
}

// Constructs the subject's xy center interval for kinds that place one subject
// relative to a reference. Returns false when the feasible region is empty.
bool relation_region(ConstraintKind k, const ObjectInstance& ref, const Vec3& e, Interval& ix,
                     Interval& iy, double& bottom_z) {
  const Aabb ra = ref.aabb();
  const Aabb fp = ref.support_footprint();
  const Vec3 ext = fp.extent();
  switch (k) {
    case ConstraintKind::place_on_surface:
      ix = {ra.min.x(), ra.max.x()};
      iy = {ra.min.y(), ra.max.y()};
      bottom_z = ra.max.z();
      return true;
    case ConstraintKind::place_left_edge:
      ix = {fp.min.x(), fp.min.x() + kEdgeBandFraction * ext.x()};
      iy = {fp.min.y(), fp.max.y()};
      break;
    case ConstraintKind::place_right_edge:
      ix = {fp.max.x() - kEdgeBandFraction * ext.x(), fp.max.x()};
      iy = {fp.min.y(), fp.max.y()};
      break;
    case ConstraintKind::place_top_edge:
      ix = {fp.min.x(), fp.max.x()};
      iy = {fp.min.y(), fp.min.y() + kEdgeBandFraction * ext.y()};
      break;
    case ConstraintKind::place_bottom_edge:
      ix = {fp.min.x(), fp.max.x()};
      iy = {fp.max.y() - kEdgeBandFraction * ext.y(), fp.max.y()};
      break;
    default: {
      // Directional relations: same support plane as the reference.
      bottom_z = ra.min.z();
      const bool left = k == ConstraintKind::place_to_left || k == ConstraintKind::place_front_left ||
                        k == ConstraintKind::place_back_left;
      const bool right = k == ConstraintKind::place_to_right || k == ConstraintKind::place_front_right ||
                         k == ConstraintKind::place_back_right;
      const bool front = k == ConstraintKind::place_in_right || k == ConstraintKind::place_front_left ||
                         k == ConstraintKind::place_front_right;
      const bool back = k == ConstraintKind::place_behind || k == ConstraintKind::place_back_left ||
                        k == ConstraintKind::place_back_right;
      ix = {};
      iy = {};
      if (left) ix.hi = ra.min.x() - e.x();
      if (right) ix.lo = ra.max.x() + e.x();
      if (front) iy.lo = ra.max.y() + e.y();
      if (back) iy.hi = ra.min.y() - e.y();
      return true;
    }
  }
  bottom_z = ref.support_height();
  return true;
}

struct Ctx {
  const Constraint& c;
  SceneLayout& layout;
  Rng& rng;
  const SolveOptions& opts;
};

bool propose_unary(Ctx& ctx, ObjectInstance& o) {
  const auto& r = ctx.c.ranges;
  const Vec3 e_old = o.aabb().extent() * 0.5;
  const double bottom = o.pose.translation().z() - e_old.z();
  Vec3 t = o.pose.translation();
  geom::Quat q = o.pose.rotation();
  switch (ctx.c.kind) {
    case ConstraintKind::scale: {
      const Range& s = r.at("s");
      o.scale = sample(ctx.rng, {s.lo, s.hi});
      t.z() = bottom + rotated_half(o, q).z();
      break;
    }
    case ConstraintKind::pose2D: {
      if (auto it = r.find("x"); it != r.end()) t.x() = sample(ctx.rng, {it->second.lo, it->second.hi});
      if (auto it = r.find("y"); it != r.end()) t.y() = sample(ctx.rng, {it->second.lo, it->second.hi});
      if (auto it = r.find("yaw"); it != r.end())
        q = geom::Quat(Eigen::AngleAxisd(deg2rad(sample(ctx.rng, {it->second.lo, it->second.hi})),
                                         Vec3::UnitZ()));
      t.z() = bottom + rotated_half(o, q).z();
      break;
    }
    case ConstraintKind::pose3D: {
      if (auto it = r.find("x"); it != r.end()) t.x() = sample(ctx.rng, {it->second.lo, it->second.hi});
      if (auto it = r.find("y"); it != r.end()) t.y() = sample(ctx.rng, {it->second.lo, it->second.hi});
      if (auto it = r.find("z"); it != r.end()) t.z() = sample(ctx.rng, {it->second.lo, it->second.hi});
      const double u1 = ctx.rng.uniform(), u2 = ctx.rng.uniform(), u3 = ctx.rng.uniform();
      q = geom::uniform_quaternion(u1, u2, u3);
      break;
    }
    default: return false;
  }
  set_pose(o, t, q);
  return true;
}

bool propose_relation(Ctx& ctx, ObjectInstance& o, const ObjectInstance& ref) {
  const geom::Quat q = o.pose.rotation();
  const Vec3 e = rotated_half(o, q);
  Interval ix, iy;
  double bottom = 0.0;
  if (!relation_region(ctx.c.kind, ref, e, ix, iy, bottom)) return false;
  const CenterBounds b = prior_bounds(ctx.layout, o.id);
  ix = ix.meet(b.x).meet(workspace_axis(ctx.layout.workspace, e, 0));
  iy = iy.meet(b.y).meet(workspace_axis(ctx.layout.workspace, e, 1));
  if (ix.empty() || iy.empty()) return false;
  set_pose(o, Vec3(sample(ctx.rng, ix), sample(ctx.rng, iy), bottom + e.z()), q);
  return true;
}

bool propose_multi(Ctx& ctx, const ObjectInstance& ref) {
  const bool disjoint = ctx.c.kind != ConstraintKind::random_placement;
  const Aabb fp = ref.support_footprint();
  std::vector<const ObjectInstance*> placed;
  for (const auto& id : ctx.c.placed_ids()) {
    ObjectInstance& o = ctx.layout.at(id);
    const geom::Quat q = o.pose.rotation();
    const Vec3 e = rotated_half(o, q);
    const CenterBounds b = prior_bounds(ctx.layout, id);
    const Interval ix = Interval{fp.min.x() + e.x(), fp.max.x() - e.x()}.meet(b.x).meet(
        workspace_axis(ctx.layout.workspace, e, 0));
    const Interval iy = Interval{fp.min.y() + e.y(), fp.max.y() - e.y()}.meet(b.y).meet(
        workspace_axis(ctx.layout.workspace, e, 1));
    if (ix.empty() || iy.empty()) return false;
    const double z = ref.support_height() + e.z();
    bool ok = false;
    for (int tries = 0; tries < ctx.opts.per_object_tries && !ok; ++tries) {
      set_pose(o, Vec3(sample(ctx.rng, ix), sample(ctx.rng, iy), z), q);
      ok = true;
      if (disjoint)
        for (const auto* p : placed)
          if (geom::aabb_intersect(o.aabb(), p->aabb())) {
            ok = false;
            break;
          }
    }
    if (!ok) return false;
    placed.push_back(&o);
  }
  return true;
}

void check_ids(const Constraint& c, const SceneLayout& layout) {
  for (const auto& id : c.placed_ids())
    if (!layout.find(id)) raise(ErrorKind::UnknownId, "unknown object id '" + id + "' in " + c.to_string());
  if (c.reference && !layout.find(*c.reference))
    raise(ErrorKind::UnknownId, "unknown reference id '" + *c.reference + "' in " + c.to_string());
}

bool all_inside_workspace(const SceneLayout& layout) {
  for (const auto& o : layout.objects)
    if (!layout.workspace.contains(o.aabb())) return false;
  return true;
}

}  // namespace

std::string_view asset_name(Asset a) {
  switch (a) {
    case Asset::box: return "box";
    case Asset::cylinder: return "cylinder";
    case Asset::bin: return "bin";
    case Asset::plug: return "plug";
    case Asset::distractor: return "distractor";
  }
  return "box";
}

Asset parse_asset(std::string_view name) {
  for (Asset a : {Asset::box, Asset::cylinder, Asset::bin, Asset::plug, Asset::distractor})
    if (asset_name(a) == name) return a;
  if (name == "distractor-primitive") return Asset::distractor;
  raise(ErrorKind::ParseError, "unknown asset '" + std::string(name) + "'");
}

void ObjectInstance::validate() const {
  if ((half_extents.array() <= 0.0).any())
    raise(ErrorKind::InvalidArgument, "object '" + id + "': half extents must be positive");
  if (!(scale > 0.0)) raise(ErrorKind::InvalidArgument, "object '" + id + "': scale must be positive");
}

Aabb ObjectInstance::aabb() const { return geom::oriented_box_aabb(pose, scaled_half_extents()); }

double ObjectInstance::support_height() const {
  const Aabb a = aabb();
  return asset == Asset::bin ? a.min.z() + kBinWall : a.max.z();
}

Aabb ObjectInstance::support_footprint() const {
  const Aabb a = aabb();
  if (asset != Asset::bin) return a;
  const Vec3 inset(kBinWall, kBinWall, 0.0);
  if (a.extent().x() <= 2 * kBinWall || a.extent().y() <= 2 * kBinWall) return a;
  return {a.min + inset, a.max - inset};
}

std::vector<geom::Obb> ObjectInstance::solid_parts() const {
  const Vec3 h = scaled_half_extents();
  if (asset != Asset::bin) return {geom::Obb{pose, h}};
  const double w = kBinWall;
  struct Part {
    Vec3 center, half;
  };
  const Part parts[] = {
      {{0, 0, -h.z() + w / 2}, {h.x(), h.y(), w / 2}},
      {{h.x() - w / 2, 0, 0}, {w / 2, h.y(), h.z()}},
      {{-h.x() + w / 2, 0, 0}, {w / 2, h.y(), h.z()}},
      {{0, h.y() - w / 2, 0}, {h.x(), w / 2, h.z()}},
      {{0, -h.y() + w / 2, 0}, {h.x(), w / 2, h.z()}},
  };
  std::vector<geom::Obb> out;
  out.reserve(5);
  for (const auto& p : parts)
    out.push_back({geom::compose(pose, RigidPose(p.center, geom::Quat::Identity())), p.half});
  return out;
}

std::vector<Aabb> ObjectInstance::collision_boxes() const {
  std::vector<Aabb> out;
  for (const auto& part : solid_parts()) out.push_back(geom::oriented_box_aabb(part.pose, part.half));
  return out;
}

const std::vector<ConstraintKind>& all_constraint_kinds() {
  static const std::vector<ConstraintKind> kinds = [] {
    std::vector<ConstraintKind> v;
    for (const auto& k : kKinds) v.push_back(k.kind);
    return v;
  }();
  return kinds;
}

std::string_view kind_name(ConstraintKind k) {
  for (const auto& info : kKinds)
    if (info.kind == k) return info.name;
  return "?";
}

std::optional<ConstraintKind> parse_kind(std::string_view name) {
  for (const auto& info : kKinds)
    if (info.name == name) return info.kind;
  return std::nullopt;
}

void Constraint::validate() const {
  const std::string name(kind_name(kind));
  auto arity = [&](bool ok) {
    if (!ok) raise(ErrorKind::ArityError, name + ": wrong number of subjects/reference/obstacles");
  };
  if (is_unary(kind)) {
    arity(subjects.size() == 1 && !reference && obstacles.empty());
  } else if (kind == ConstraintKind::with_obstacles) {
    arity(subjects.size() == 1 && reference.has_value());
  } else if (is_multi(kind)) {
    arity(!subjects.empty() && reference.has_value() && obstacles.empty());
  } else {
    arity(subjects.size() == 1 && reference.has_value() && obstacles.empty());
  }
  if (reference)
    for (const auto& id : placed_ids())
      if (id == *reference) raise(ErrorKind::ArityError, name + ": subject equals reference");
  std::set<std::string> allowed;
  if (kind == ConstraintKind::scale) allowed = {"s"};
  if (kind == ConstraintKind::pose2D) allowed = {"x", "y", "yaw"};
  if (kind == ConstraintKind::pose3D) allowed = {"x", "y", "z"};
  for (const auto& [key, r] : ranges) {
    if (!allowed.count(key)) raise(ErrorKind::ArityError, name + ": unexpected range '" + key + "'");
    if (!(r.lo <= r.hi)) raise(ErrorKind::InvalidArgument, name + ": range '" + key + "' has lo > hi");
  }
  if (kind == ConstraintKind::scale) {
    if (!ranges.count("s")) raise(ErrorKind::ArityError, "scale: missing range s=[lo,hi]");
    if (!(ranges.at("s").lo > 0.0)) raise(ErrorKind::InvalidArgument, "scale: range must be positive");
  }
}

std::vector<std::string> Constraint::placed_ids() const {
  std::vector<std::string> ids = subjects;
  ids.insert(ids.end(), obstacles.begin(), obstacles.end());
  return ids;
}

std::string Constraint::to_string() const {
  std::string out(kind_name(kind));
  out += " " + join(subjects);
  if (kind == ConstraintKind::with_obstacles) out += " " + (obstacles.empty() ? std::string("-") : join(obstacles));
  if (reference) out += " " + *reference;
  for (const auto& [key, r] : ranges) out += " " + key + "=[" + fmt_double(r.lo) + "," + fmt_double(r.hi) + "]";
  return out;
}

Constraint parse_constraint(const std::string& line) {
  const auto tok = split_ws(line);
  if (tok.empty()) raise(ErrorKind::ParseError, "empty constraint line");
  const auto kind = parse_kind(tok[0]);
  if (!kind) raise(ErrorKind::ParseError, "unknown constraint kind '" + tok[0] + "'");
  Constraint c;
  c.kind = *kind;
  std::vector<std::string> positional;
  for (std::size_t i = 1; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string::npos) {
      positional.push_back(tok[i]);
      continue;
    }
    const std::string key = tok[i].substr(0, eq);
    std::string val = tok[i].substr(eq + 1);
    if (val.size() < 5 || val.front() != '[' || val.back() != ']')
      raise(ErrorKind::ParseError, "range '" + tok[i] + "' must look like key=[lo,hi]");
    const auto parts = split_list(val.substr(1, val.size() - 2));
    if (parts.size() != 2) raise(ErrorKind::ParseError, "range '" + tok[i] + "' needs two bounds");
    c.ranges[key] = Range{parse_double(parts[0], key), parse_double(parts[1], key)};
  }
  if (positional.empty()) raise(ErrorKind::ArityError, tok[0] + ": missing subject");
  c.subjects = split_list(positional[0]);
  std::size_t next = 1;
  if (c.kind == ConstraintKind::with_obstacles && positional.size() >= 3) {
    if (positional[1] != "-") c.obstacles = split_list(positional[1]);
    next = 2;
  }
  if (next < positional.size()) c.reference = positional[next++];
  if (next < positional.size()) raise(ErrorKind::ArityError, tok[0] + ": too many positional arguments");
  c.validate();
  return c;
}

const ObjectInstance* SceneLayout::find(std::string_view id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

ObjectInstance* SceneLayout::find(std::string_view id) {
  for (auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

const ObjectInstance& SceneLayout::at(std::string_view id) const {
  if (const auto* o = find(id)) return *o;
  raise(ErrorKind::UnknownId, "unknown object id '" + std::string(id) + "'");
}

ObjectInstance& SceneLayout::at(std::string_view id) {
  if (auto* o = find(id)) return *o;
  raise(ErrorKind::UnknownId, "unknown object id '" + std::string(id) + "'");
}

bool constraint_predicate(const Constraint& c, const SceneLayout& layout) {
  c.validate();
  check_ids(c, layout);
  const ObjectInstance& s = layout.at(c.subjects.front());
  const Aabb sa = s.aabb();
  switch (c.kind) {
    case ConstraintKind::scale: return c.ranges.at("s").contains(s.scale);
    case ConstraintKind::pose2D:
    case ConstraintKind::pose3D: {
      const Vec3& t = s.pose.translation();
      for (const auto& [key, r] : c.ranges) {
        if (key == "x" && !r.contains(t.x())) return false;
        if (key == "y" && !r.contains(t.y())) return false;
        if (key == "z" && !r.contains(t.z())) return false;
        if (key == "yaw" && !yaw_in_range(s.pose.yaw(), r)) return false;
      }
      return true;
    }
    default: break;
  }
  const ObjectInstance& ref = layout.at(*c.reference);
  const Aabb ra = ref.aabb();
  switch (c.kind) {
    case ConstraintKind::place_on_surface:
      return std::abs(sa.min.z() - ra.max.z()) <= kSurfaceTol && center_xy_inside(sa.center(), ra);
    case ConstraintKind::place_left_edge:
    case ConstraintKind::place_right_edge:
    case ConstraintKind::place_top_edge:
    case ConstraintKind::place_bottom_edge: return in_edge_band(c.kind, sa.center(), ref.support_footprint());
    case ConstraintKind::place_to_left: return left_of(sa, ra);
    case ConstraintKind::place_to_right: return right_of(sa, ra);
    case ConstraintKind::place_in_right: return front_of(sa, ra);
    case ConstraintKind::place_behind: return behind_of(sa, ra);
    case ConstraintKind::place_front_left: return front_of(sa, ra) && left_of(sa, ra);
    case ConstraintKind::place_front_right: return front_of(sa, ra) && right_of(sa, ra);
    case ConstraintKind::place_back_left: return behind_of(sa, ra) && left_of(sa, ra);
    case ConstraintKind::place_back_right: return behind_of(sa, ra) && right_of(sa, ra);
    case ConstraintKind::random_placement:
    case ConstraintKind::no_overlapping:
    case ConstraintKind::with_obstacles: {
      std::vector<const ObjectInstance*> objs;
      for (const auto& id : c.placed_ids()) objs.push_back(&layout.at(id));
      return inside_without_overlap(objs, ref, c.kind != ConstraintKind::random_placement);
    }
    default: return false;
  }
}

SceneLayout solve_constraint(const Constraint& c, const SceneLayout& layout, Rng& rng, const SolveOptions& opts) {
  c.validate();
  check_ids(c, layout);
  for (int attempt = 0; attempt < opts.max_rejections; ++attempt) {
    SceneLayout trial = layout;
    Ctx ctx{c, trial, rng, opts};
    bool ok = false;
    if (is_unary(c.kind)) {
      ok = propose_unary(ctx, trial.at(c.subjects.front()));
    } else if (is_multi(c.kind)) {
      ok = propose_multi(ctx, trial.at(*c.reference));
    } else {
      ok = propose_relation(ctx, trial.at(c.subjects.front()), trial.at(*c.reference));
    }
    if (!ok || !constraint_predicate(c, trial) || !all_inside_workspace(trial)) continue;
    bool keeps = true;
    for (const auto& prev : trial.constraints)
      if (!constraint_predicate(prev, trial)) {
        keeps = false;
        break;
      }
    if (!keeps) continue;
    trial.constraints.push_back(c);
    return trial;
  }
  raise(ErrorKind::Infeasible, "infeasible: " + c.to_string());
}

TaskSpec parse_task_spec(const std::string& text) {
  TaskSpec spec;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string ctx = "scene spec line " + std::to_string(lineno);
    const auto tok = split_ws(line);
    if (tok[0] == "workspace") {
      if (tok.size() != 7) raise(ErrorKind::ParseError, ctx + ": workspace needs 6 numbers");
      Vec3 lo, hi;
      for (int i = 0; i < 3; ++i) {
        lo[i] = parse_double(tok[1 + i], ctx);
        hi[i] = parse_double(tok[4 + i], ctx);
      }
      spec.workspace = Aabb(lo, hi);
    } else if (tok[0] == "object") {
      if (tok.size() < 6) raise(ErrorKind::ParseError, ctx + ": object <id> <asset> hx hy hz [pose=...] [scale=s]");
      ObjectDecl d;
      d.id = tok[1];
      d.asset = parse_asset(tok[2]);
      d.half_extents = Vec3(parse_double(tok[3], ctx), parse_double(tok[4], ctx), parse_double(tok[5], ctx));
      for (std::size_t i = 6; i < tok.size(); ++i) {
        if (tok[i].rfind("pose=", 0) == 0) {
          const auto parts = split_list(tok[i].substr(5));
          if (parts.size() != 4) raise(ErrorKind::ParseError, ctx + ": pose=x,y,z,yaw_deg");
          d.fixed_pose = std::array<double, 4>{parse_double(parts[0], ctx), parse_double(parts[1], ctx),
                                               parse_double(parts[2], ctx), deg2rad(parse_double(parts[3], ctx))};
        } else if (tok[i].rfind("scale=", 0) == 0) {
          d.scale = parse_double(tok[i].substr(6), ctx);
        } else {
          raise(ErrorKind::ParseError, ctx + ": unexpected token '" + tok[i] + "'");
        }
      }
      for (const auto& other : spec.objects)
        if (other.id == d.id) raise(ErrorKind::ParseError, ctx + ": duplicate object id '" + d.id + "'");
      spec.objects.push_back(d);
    } else {
      try {
        spec.constraints.push_back(parse_constraint(line));
      } catch (const Error& e) {
        raise(e.kind(), ctx + ": " + e.what());
      }
    }
  }
  return spec;
}

std::string task_spec_to_string(const TaskSpec& spec) {
  std::ostringstream out;
  const Aabb& w = spec.workspace;
  out << "workspace " << fmt_double(w.min.x()) << ' ' << fmt_double(w.min.y()) << ' ' << fmt_double(w.min.z()) << ' '
      << fmt_double(w.max.x()) << ' ' << fmt_double(w.max.y()) << ' ' << fmt_double(w.max.z()) << '\n';
  for (const auto& d : spec.objects) {
    out << "object " << d.id << ' ' << asset_name(d.asset) << ' ' << fmt_double(d.half_extents.x()) << ' '
        << fmt_double(d.half_extents.y()) << ' ' << fmt_double(d.half_extents.z());
    if (d.fixed_pose) {
      const auto& p = *d.fixed_pose;
      out << " pose=" << fmt_double(p[0]) << ',' << fmt_double(p[1]) << ',' << fmt_double(p[2]) << ','
          << fmt_double(rad2deg(p[3]));
    }
    if (d.scale != 1.0) out << " scale=" << fmt_double(d.scale);
    out << '\n';
  }
  for (const auto& c : spec.constraints) out << c.to_string() << '\n';
  return out.str();
}

SceneLayout generate_layout(const TaskSpec& spec, std::uint64_t seed, const SolveOptions& opts) {
  SceneLayout layout;
  layout.workspace = spec.workspace;
  layout.seed = seed;
  Rng rng(mix_seed(seed, 0x5ce4e));

  for (const auto& d : spec.objects) {
    ObjectInstance o;
    o.id = d.id;
    o.asset = d.asset;
    o.half_extents = d.half_extents;
    o.scale = d.scale;
    o.validate();
    if (d.fixed_pose) {
      const auto& p = *d.fixed_pose;
      o.pose = RigidPose::from_yaw(p[3], Vec3(p[0], p[1], p[2]));
    } else {
      const Vec3 e = o.scaled_half_extents();
      Interval ix = workspace_axis(spec.workspace, e, 0), iy = workspace_axis(spec.workspace, e, 1),
               iz = workspace_axis(spec.workspace, e, 2);
      if (ix.empty() || iy.empty() || iz.empty())
        raise(ErrorKind::Infeasible, "infeasible: object '" + d.id + "' does not fit the workspace");
      const double x = sample(rng, ix), y = sample(rng, iy), z = sample(rng, iz);
      o.pose = RigidPose::translation_only(x, y, z);
    }
    layout.objects.push_back(o);
  }

  for (const auto& c : spec.constraints) check_ids(c, layout);

  // Kahn's algorithm over reference -> placed-object edges; ties keep declaration order.
  const std::size_t n = layout.objects.size();
  auto index_of = [&](const std::string& id) {
    for (std::size_t i = 0; i < n; ++i)
      if (layout.objects[i].id == id) return i;
    return n;
  };
  std::vector<std::set<std::size_t>> out_edges(n);
  std::vector<int> indeg(n, 0);
  for (const auto& c : spec.constraints) {
    if (!c.reference) continue;
    const std::size_t r = index_of(*c.reference);
    for (const auto& id : c.placed_ids()) {
      const std::size_t s = index_of(id);
      if (out_edges[r].insert(s).second) ++indeg[s];
    }
  }
  std::vector<int> rank(n, -1);
  std::vector<std::size_t> frontier;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) frontier.push_back(i);
  int level = 0;
  std::size_t ranked = 0;
  while (!frontier.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t i : frontier) {
      rank[i] = level;
      ++ranked;
      for (std::size_t j : out_edges[i])
        if (--indeg[j] == 0) next.push_back(j);
    }
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
    ++level;
  }
  if (ranked != n) raise(ErrorKind::CyclicReference, "constraint references form a cycle");

  auto priority = [](ConstraintKind k) {
    if (k == ConstraintKind::scale) return 0;
    if (k == ConstraintKind::pose2D || k == ConstraintKind::pose3D) return 1;
    return 2;
  };
  std::vector<std::size_t> order(spec.constraints.size());
  std::vector<int> crank(order.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
    for (const auto& id : spec.constraints[i].placed_ids()) crank[i] = std::max(crank[i], rank[index_of(id)]);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (crank[a] != crank[b]) return crank[a] < crank[b];
    return priority(spec.constraints[a].kind) < priority(spec.constraints[b].kind);
  });

  for (std::size_t i : order) layout = solve_constraint(spec.constraints[i], layout, rng, opts);
  if (!all_inside_workspace(layout)) raise(ErrorKind::Infeasible, "infeasible: objects outside the workspace");
  return layout;
}

bool ValidationReport::passed() const {
  if (!containment_ok()) return false;
  return std::all_of(constraints.begin(), constraints.end(), [](const auto& r) { return r.pass; });
}

ValidationReport validate_layout(const SceneLayout& layout) {
  ValidationReport rep;
  for (std::size_t i = 0; i < layout.constraints.size(); ++i) {
    const auto& c = layout.constraints[i];
    bool pass = false;
    try {
      pass = constraint_predicate(c, layout);
    } catch (const Error&) {
      pass = false;
    }
    rep.constraints.push_back({i, c.to_string(), pass});
  }
  for (const auto& o : layout.objects)
    if (!layout.workspace.contains(o.aabb())) rep.outside_workspace.push_back(o.id);
  return rep;
}

std::string layout_to_string(const SceneLayout& layout) {
  std::ostringstream out;
  out << "layout seed " << layout.seed << '\n';
  const Aabb& w = layout.workspace;
  out << "workspace " << fmt_double(w.min.x()) << ' ' << fmt_double(w.min.y()) << ' ' << fmt_double(w.min.z()) << ' '
      << fmt_double(w.max.x()) << ' ' << fmt_double(w.max.y()) << ' ' << fmt_double(w.max.z()) << '\n';
  for (const auto& o : layout.objects) {
    out << "object " << o.id << ' ' << asset_name(o.asset) << ' ' << geom::pose_to_string(o.pose) << ' '
        << fmt_double(o.half_extents.x()) << ' ' << fmt_double(o.half_extents.y()) << ' '
        << fmt_double(o.half_extents.z()) << ' ' << fmt_double(o.scale) << '\n';
  }
  for (const auto& c : layout.constraints) out << "constraint " << c.to_string() << '\n';
  return out.str();
}

SceneLayout parse_layout(const std::string& text) {
  SceneLayout layout;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string ctx = "layout line " + std::to_string(lineno);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "layout") {
      if (tok.size() != 3 || tok[1] != "seed") raise(ErrorKind::ParseError, ctx + ": bad header");
      layout.seed = static_cast<std::uint64_t>(parse_int(tok[2], ctx));
      header = true;
    } else if (tok[0] == "workspace") {
      if (tok.size() != 7) raise(ErrorKind::ParseError, ctx + ": workspace needs 6 numbers");
      Vec3 lo, hi;
      for (int i = 0; i < 3; ++i) {
        lo[i] = parse_double(tok[1 + i], ctx);
        hi[i] = parse_double(tok[4 + i], ctx);
      }
      layout.workspace = Aabb(lo, hi);
    } else if (tok[0] == "object") {
      if (tok.size() != 14) raise(ErrorKind::ParseError, ctx + ": object line needs 13 fields");
      ObjectInstance o;
      o.id = tok[1];
      o.asset = parse_asset(tok[2]);
      std::array<double, 7> p{};
      for (int i = 0; i < 7; ++i) p[i] = parse_double(tok[3 + i], ctx);
      o.pose = RigidPose::from_array(p);
      o.half_extents = Vec3(parse_double(tok[10], ctx), parse_double(tok[11], ctx), parse_double(tok[12], ctx));
      o.scale = parse_double(tok[13], ctx);
      o.validate();
      layout.objects.push_back(o);
    } else if (tok[0] == "constraint") {
      layout.constraints.push_back(parse_constraint(line.substr(line.find("constraint") + 10)));
    } else {
      raise(ErrorKind::ParseError, ctx + ": unexpected record '" + tok[0] + "'");
    }
  }
  if (!header) raise(ErrorKind::ParseError, "layout: missing header");
  return layout;
}

TaskSpec sorting_task_spec(int n_distractors, bool skewed_yaw) {
  if (n_distractors < 0 || n_distractors > 3)
    raise(ErrorKind::InvalidArgument, "sorting scene supports 0-3 distractors");
  std::ostringstream s;
  s << "workspace -0.45 -0.35 -0.06 0.45 0.35 0.5\n"
       "object table box 0.45 0.35 0.025 pose=0,0,-0.025,0\n"
       "object bin_center bin 0.15 0.12 0.05\n"
       "object bin_left bin 0.1 0.1 0.04\n"
       "object bin_right bin 0.1 0.1 0.04\n"
       "object plug plug 0.022 0.011 0.012\n";
  for (int i = 1; i <= n_distractors; ++i) s << "object d" << i << " distractor 0.016 0.016 0.02\n";
  s << "pose2D bin_center x=[0,0] y=[0.1,0.1] yaw=[0,0]\n"
       "place_on_surface bin_center table\n"
       "pose2D bin_left x=[-0.34,-0.3] y=[0.08,0.12] yaw=[0,0]\n"
       "place_to_left bin_left bin_center\n"
       "pose2D bin_right x=[0.3,0.34] y=[0.08,0.12] yaw=[0,0]\n"
       "place_to_right bin_right bin_center\n";
  s << "pose2D plug x=[-0.05,0.05] y=[0.06,0.14] yaw=" << (skewed_yaw ? "[0,180]" : "[-180,180]") << "\n";
  s << "with_obstacles plug ";
  if (n_distractors == 0) {
    s << "- bin_center\n";
  } else {
    for (int i = 1; i <= n_distractors; ++i) s << (i > 1 ? "," : "") << "d" << i;
    s << " bin_center\n";
  }
  return parse_task_spec(s.str());
}

TaskSpec cup_place_task_spec() {
  return parse_task_spec(
      "workspace -0.45 -0.35 -0.06 0.45 0.35 0.5\n"
      "object table box 0.45 0.35 0.025 pose=0,0,-0.025,0\n"
      "object cup cylinder 0.02 0.02 0.035\n"
      "object coaster box 0.045 0.045 0.004\n"
      "pose2D cup x=[-0.15,-0.05] y=[-0.1,0.1] yaw=[0,0]\n"
      "place_on_surface cup table\n"
      "pose2D coaster x=[0.05,0.2] y=[-0.1,0.1] yaw=[0,0]\n"
      "place_on_surface coaster table\n");
}

}  // namespace s2r::scene
