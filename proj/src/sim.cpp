#include "s2r/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace s2r::sim {

namespace {

constexpr int kSubsteps = 8;

// Same table as config/arm.cfg.
constexpr const char* kDefaultArm = R"(# UR5-style arm at the far table edge.
base 0 0.38 0 -90
#     a        alpha  d        offset       lo    hi
# Offsets put q = 0 at a top-down home above the table.
joint 0        90     0.089159 18.17118624  -180  180
joint -0.425   0      0        -94.78283318 -180  180
joint -0.39225 0      0        -82.34995454 -180  180
joint 0        90     0.10915  87.13278771  -180  180
joint 0        -90    0.09465  -90          -180  180
joint 0        0      0.0823   -71.82881376 -180  180
tcp_offset 0.15
max_stroke 0.085
finger_radius 0.005
finger_length 0.09
finger_tip 0.005
pad_half_width 0.01
palm_radius 0.01
wrist_radius 0.03
link_radius 0.035
joint_delta_cap 0.05
grasp_margin 0.002
head_camera 0 0.6 0.7 0 0 0 220 220 160 120
wrist_camera -0.12 0 0.05 120 120 96 72
)";

Eigen::Matrix4d dh(const DhJoint& j, double q) {
  const double th = q + j.offset;
  const double ct = std::cos(th), st = std::sin(th), ca = std::cos(j.alpha), sa = std::sin(j.alpha);
  Eigen::Matrix4d t;
  t << ct, -st * ca, st * sa, j.a * ct, st, ct * ca, -ct * sa, j.a * st, 0, sa, ca, j.d, 0, 0, 0, 1;
  return t;
}

Eigen::Matrix4d to_matrix(const RigidPose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = p.rotation().toRotationMatrix();
  m.topRightCorner<3, 1>() = p.translation();
  return m;
}

RigidPose from_matrix(const Eigen::Matrix4d& m) {
  return RigidPose(m.topRightCorner<3, 1>(), Quat(geom::Mat3(m.topLeftCorner<3, 3>())));
}

// Frames 0..6 plus the tool frame.
std::array<Eigen::Matrix4d, 8> chain(const ArmModel& arm, const JointVec& q) {
  std::array<Eigen::Matrix4d, 8> f;
  f[0] = to_matrix(arm.base);
  for (int i = 0; i < 6; ++i) f[i + 1] = f[i] * dh(arm.joints[i], q[i]);
  f[7] = f[6] * to_matrix(tcp_in_flange(arm));
  return f;
}

Vec3 rotation_error(const Quat& target, const Quat& current) {
  Quat d = target * current.conjugate();
  if (d.w() < 0) d.coeffs() = -d.coeffs();
  const Eigen::AngleAxisd aa(d);
  return aa.angle() * aa.axis();
}

struct Capsule {
  Vec3 a, b;
  double r;
};

std::vector<Capsule> arm_capsules(const ArmModel& arm, const JointVec& q, double opening) {
  const auto f = chain(arm, q);
  std::array<Vec3, 7> o;
  for (int i = 0; i < 7; ++i) o[i] = f[i].topRightCorner<3, 1>();
  const Vec3 tcp = f[7].topRightCorner<3, 1>();
  const Vec3 x = f[7].block<3, 1>(0, 0), y = f[7].block<3, 1>(0, 1);
  const Vec3 palm = tcp - arm.finger_length * x;
  const double bar = 0.5 * arm.max_stroke + arm.finger_radius;
  const double g = 0.5 * opening + arm.finger_radius;
  std::vector<Capsule> c;
  c.reserve(9);
  c.push_back({o[1], o[2], arm.link_radius});
  c.push_back({o[2], o[3], arm.link_radius});
  c.push_back({o[3], o[4], arm.wrist_radius});
  c.push_back({o[4], o[5], arm.wrist_radius});
  c.push_back({o[5], o[6], arm.wrist_radius});
  c.push_back({o[6], palm, arm.wrist_radius});
  c.push_back({palm - bar * y, palm + bar * y, arm.palm_radius});
  c.push_back({palm + g * y, tcp + arm.finger_tip * x + g * y, arm.finger_radius});
  c.push_back({palm - g * y, tcp + arm.finger_tip * x - g * y, arm.finger_radius});
  return c;
}

bool capsule_hits_object(const Capsule& c, const scene::ObjectInstance& o) {
  const geom::Aabb cb(c.a.cwiseMin(c.b).array() - c.r, c.a.cwiseMax(c.b).array() + c.r);
  if (!geom::aabb_intersect(cb, o.aabb())) return false;
  for (const auto& part : o.solid_parts())
    if (geom::capsule_hits_obb(c.a, c.b, c.r, part)) return true;
  return false;
}

bool objects_penetrate(const scene::ObjectInstance& a, const scene::ObjectInstance& b) {
  if (!geom::aabb_penetrate(a.aabb(), b.aabb())) return false;
  for (const auto& pa : a.solid_parts())
    for (const auto& pb : b.solid_parts())
      if (geom::obb_penetrate(pa, pb)) return true;
  return false;
}

bool graspable(const scene::ObjectInstance& o) { return o.asset != scene::Asset::bin; }

// Highest solid top under `o` whose xy overlaps it, or none.
std::optional<double> support_below(const scene::SceneLayout& layout, const scene::ObjectInstance& o) {
  const geom::Aabb ob = o.aabb();
  std::optional<double> best;
  for (const auto& other : layout.objects) {
    if (other.id == o.id) continue;
    for (const auto& part : other.solid_parts()) {
      const geom::Aabb pb = geom::oriented_box_aabb(part.pose, part.half);
      const bool xy = pb.min.x() < ob.max.x() && ob.min.x() < pb.max.x() && pb.min.y() < ob.max.y() &&
                      ob.min.y() < pb.max.y();
      if (xy && pb.max.z() <= ob.min.z() + 1e-6 && (!best || pb.max.z() > *best)) best = pb.max.z();
    }
  }
  return best;
}

// Object whose support region holds o's center.
const scene::ObjectInstance* resting_on(const scene::SceneLayout& layout, const scene::ObjectInstance& o) {
  const geom::Aabb ob = o.aabb();
  const Vec3 c = o.pose.translation();
  const scene::ObjectInstance* best = nullptr;
  double best_z = -1e300;
  for (const auto& other : layout.objects) {
    if (other.id == o.id) continue;
    const geom::Aabb fp = other.support_footprint();
    const double top = other.support_height();
    if (c.x() >= fp.min.x() && c.x() <= fp.max.x() && c.y() >= fp.min.y() && c.y() <= fp.max.y() &&
        top <= ob.min.z() + 1e-6 && top > best_z) {
      best = &other;
      best_z = top;
    }
  }
  return best;
}

void settle(WorldState& w, const std::string& id) {
  auto& o = w.layout.at(id);
  const double bottom = o.aabb().min.z();
  const double floor = support_below(w.layout, o).value_or(w.layout.workspace.min.z());
  if (floor < bottom) o.pose = RigidPose(o.pose.translation() - Vec3(0, 0, bottom - floor), o.pose.rotation());
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

void ArmModel::validate() const {
  for (const auto& j : joints)
    if (!(j.lo < j.hi)) raise(ErrorKind::InvalidArgument, "arm: joint limits require lo < hi");
  if (!(reach() > 0)) raise(ErrorKind::InvalidArgument, "arm: link lengths must be positive");
  if (!(tcp_offset >= 0 && max_stroke > 0 && finger_radius > 0 && finger_length > 0 && joint_delta_cap > 0))
    raise(ErrorKind::InvalidArgument, "arm: gripper and cap values must be positive");
  head_camera.validate();
  wrist_camera.validate();
}

double ArmModel::reach() const {
  double r = tcp_offset;
  for (const auto& j : joints) r += std::abs(j.a) + std::abs(j.d);
  return r;
}

std::uint64_t ArmModel::hash() const { return fnv1a64(arm_to_string(*this)); }

ArmModel parse_arm(const std::string& text) {
  ArmModel arm;
  int joint = 0;
  bool has_base = false, has_head = false, has_wrist = false;
  int lineno = 0;
  for (const auto& raw : lines_of(text)) {
    ++lineno;
    std::string line = raw.substr(0, raw.find('#'));
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string ctx = "arm line " + std::to_string(lineno);
    std::vector<double> v;
    for (std::size_t i = 1; i < tok.size(); ++i) v.push_back(parse_double(tok[i], ctx));
    const auto need = [&](std::size_t n) {
      if (v.size() != n) raise(ErrorKind::ParseError, ctx + ": expected " + std::to_string(n) + " values");
    };
    const std::string& k = tok[0];
    if (k == "base") {
      need(4);
      arm.base = RigidPose::from_yaw(deg2rad(v[3]), Vec3(v[0], v[1], v[2]));
      has_base = true;
    } else if (k == "joint") {
      need(6);
      if (joint >= 6) raise(ErrorKind::ParseError, ctx + ": more than six joints");
      arm.joints[joint++] = {v[0], deg2rad(v[1]), v[2], deg2rad(v[3]), deg2rad(v[4]), deg2rad(v[5])};
    } else if (k == "head_camera") {
      need(10);
      arm.head_camera = splat::Camera::look_at(Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]), Vec3::UnitZ(),
                                               v[6], v[7], static_cast<int>(v[8]), static_cast<int>(v[9]));
      has_head = true;
    } else if (k == "wrist_camera") {
      need(7);
      geom::Mat3 r;
      r.col(0) = Vec3::UnitY();
      r.col(1) = Vec3::UnitZ();
      r.col(2) = Vec3::UnitX();
      arm.wrist_mount = RigidPose(Vec3(v[0], v[1], v[2]), Quat(r));
      splat::Camera c;
      c.fx = v[3];
      c.fy = v[4];
      c.width = static_cast<int>(v[5]);
      c.height = static_cast<int>(v[6]);
      c.cx = 0.5 * (c.width - 1);
      c.cy = 0.5 * (c.height - 1);
      c.near = 0.01;
      c.far = 10.0;
      arm.wrist_camera = c;
      has_wrist = true;
    } else {
      need(1);
      double* field = nullptr;
      if (k == "tcp_offset") field = &arm.tcp_offset;
      else if (k == "max_stroke") field = &arm.max_stroke;
      else if (k == "finger_radius") field = &arm.finger_radius;
      else if (k == "finger_length") field = &arm.finger_length;
      else if (k == "finger_tip") field = &arm.finger_tip;
      else if (k == "pad_half_width") field = &arm.pad_half_width;
      else if (k == "palm_radius") field = &arm.palm_radius;
      else if (k == "wrist_radius") field = &arm.wrist_radius;
      else if (k == "link_radius") field = &arm.link_radius;
      else if (k == "joint_delta_cap") field = &arm.joint_delta_cap;
      else if (k == "grasp_margin") field = &arm.grasp_margin;
      else raise(ErrorKind::ParseError, ctx + ": unknown key '" + k + "'");
      *field = v[0];
    }
  }
  if (joint != 6 || !has_base || !has_head || !has_wrist)
    raise(ErrorKind::ParseError, "arm: requires base, six joints, head_camera and wrist_camera");
  arm.validate();
  return arm;
}

std::string arm_to_string(const ArmModel& arm) {
  std::ostringstream s;
  const auto b = arm.base.to_array();
  s << "base " << fmt_double(b[0]) << ' ' << fmt_double(b[1]) << ' ' << fmt_double(b[2]) << ' '
    << fmt_double(rad2deg(arm.base.yaw())) << '\n';
  for (const auto& j : arm.joints)
    s << "joint " << fmt_double(j.a) << ' ' << fmt_double(rad2deg(j.alpha)) << ' ' << fmt_double(j.d) << ' '
      << fmt_double(rad2deg(j.offset)) << ' ' << fmt_double(rad2deg(j.lo)) << ' ' << fmt_double(rad2deg(j.hi))
      << '\n';
  const std::pair<const char*, double> scalars[] = {
      {"tcp_offset", arm.tcp_offset},       {"max_stroke", arm.max_stroke},
      {"finger_radius", arm.finger_radius}, {"finger_length", arm.finger_length},
      {"finger_tip", arm.finger_tip},       {"pad_half_width", arm.pad_half_width},
      {"palm_radius", arm.palm_radius},     {"wrist_radius", arm.wrist_radius},
      {"link_radius", arm.link_radius},     {"joint_delta_cap", arm.joint_delta_cap},
      {"grasp_margin", arm.grasp_margin}};
  for (const auto& [k, v] : scalars) s << k << ' ' << fmt_double(v) << '\n';
  const auto& h = arm.head_camera;
  const Vec3 eye = h.pose.translation(), ahead = h.pose.apply(Vec3::UnitZ());
  s << "head_camera";
  for (double v : {eye.x(), eye.y(), eye.z(), ahead.x(), ahead.y(), ahead.z(), h.fx, h.fy})
    s << ' ' << fmt_double(v);
  s << ' ' << h.width << ' ' << h.height << '\n';
  const Vec3 m = arm.wrist_mount.translation();
  const auto& wc = arm.wrist_camera;
  s << "wrist_camera " << fmt_double(m.x()) << ' ' << fmt_double(m.y()) << ' ' << fmt_double(m.z()) << ' '
    << fmt_double(wc.fx) << ' ' << fmt_double(wc.fy) << ' ' << wc.width << ' ' << wc.height << '\n';
  return s.str();
}

ArmModel load_arm(const std::string& path) { return parse_arm(read_text_file(path)); }

const ArmModel& default_arm() {
  static const ArmModel arm = parse_arm(kDefaultArm);
  return arm;
}

RigidPose tcp_in_flange(const ArmModel& arm) {
  geom::Mat3 r;
  r.col(0) = Vec3::UnitZ();
  r.col(1) = Vec3::UnitY();
  r.col(2) = -Vec3::UnitX();
  return RigidPose(Vec3(0, 0, arm.tcp_offset), Quat(r));
}

bool within_limits(const ArmModel& arm, const JointVec& q) {
  for (int i = 0; i < 6; ++i)
    if (!(q[i] >= arm.joints[i].lo && q[i] <= arm.joints[i].hi)) return false;
  return true;
}

RigidPose forward_kinematics(const ArmModel& arm, const JointVec& q) {
  if (!within_limits(arm, q)) raise(ErrorKind::JointLimit, "joint configuration outside limits");
  return from_matrix(chain(arm, q)[7]);
}

std::array<Vec3, 7> frame_origins(const ArmModel& arm, const JointVec& q) {
  const auto f = chain(arm, q);
  std::array<Vec3, 7> o;
  for (int i = 0; i < 7; ++i) o[i] = f[i].topRightCorner<3, 1>();
  return o;
}

namespace {

// Full-circle joints wrap instead of sticking at a limit.
double into_limits(const DhJoint& j, double q) {
  if (j.hi - j.lo >= 2.0 * kPi - 1e-12) {
    double r = std::fmod(q - j.lo, 2.0 * kPi);
    if (r < 0) r += 2.0 * kPi;
    return std::min(j.lo + r, j.hi);
  }
  return std::clamp(q, j.lo, j.hi);
}

bool dls_solve(const ArmModel& arm, const RigidPose& target, JointVec& q, const IkOptions& opts) {
  const double lambda2 = opts.damping * opts.damping;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const auto f = chain(arm, q);
    const Vec3 pe = f[7].topRightCorner<3, 1>();
    const Quat qe(geom::Mat3(f[7].topLeftCorner<3, 3>()));
    Eigen::Matrix<double, 6, 1> e;
    e.head<3>() = target.translation() - pe;
    e.tail<3>() = rotation_error(target.rotation(), qe);
    if (e.head<3>().norm() < opts.pos_tol && e.tail<3>().norm() < opts.rot_tol) return true;
    Eigen::Matrix<double, 6, 6> j;
    for (int i = 0; i < 6; ++i) {
      const Vec3 z = f[i].block<3, 1>(0, 2);
      const Vec3 p = f[i].topRightCorner<3, 1>();
      j.block<3, 1>(0, i) = z.cross(pe - p);
      j.block<3, 1>(3, i) = z;
    }
    const Eigen::Matrix<double, 6, 6> jjt = j * j.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
    JointVec dq = j.transpose() * jjt.ldlt().solve(e);
    const double m = dq.cwiseAbs().maxCoeff();
    if (m > 0.1) dq *= 0.1 / m;
    q += dq;
    for (int i = 0; i < 6; ++i) q[i] = into_limits(arm.joints[i], q[i]);
  }
  return false;
}

}  // namespace

JointVec inverse_kinematics(const ArmModel& arm, const RigidPose& target, const JointVec& seed,
                            const IkOptions& opts) {
  if (!target.translation().allFinite()) raise(ErrorKind::InvalidArgument, "IK target not finite");
  const Vec3 shoulder = frame_origins(arm, JointVec::Zero())[1];
  if ((target.translation() - shoulder).norm() > arm.reach())
    raise(ErrorKind::Unreachable, "IK target outside the reach sphere");
  JointVec q = seed;
  for (int i = 0; i < 6; ++i) q[i] = into_limits(arm.joints[i], q[i]);
  if (dls_solve(arm, target, q, opts)) return q;
  Rng rng(opts.restart_seed);
  for (int r = 0; r < opts.restarts; ++r) {
    for (int i = 0; i < 6; ++i) q[i] = rng.uniform(arm.joints[i].lo, arm.joints[i].hi);
    if (dls_solve(arm, target, q, opts)) return q;
  }
  raise(ErrorKind::Unreachable, "IK did not converge for target " + geom::pose_to_string(target));
}

WorldState make_world(const ArmModel& arm, const scene::SceneLayout& layout, std::uint64_t seed) {
  WorldState w;
  w.layout = layout;
  w.q = JointVec::Zero();
  w.gripper = arm.max_stroke;
  w.rng = Rng(mix_seed(seed, 0x5157));
  return w;
}

std::optional<std::string> find_collision(const ArmModel& arm, const WorldState& w, const JointVec& q,
                                          double opening) {
  const auto caps = arm_capsules(arm, q, opening);
  for (const auto& o : w.layout.objects) {
    if (w.attached && o.id == *w.attached) continue;
    for (std::size_t i = 0; i < caps.size(); ++i)
      if (capsule_hits_object(caps[i], o)) return o.id;
  }
  if (w.attached) {
    scene::ObjectInstance held = w.layout.at(*w.attached);
    held.pose = geom::compose(forward_kinematics(arm, q), w.attach_offset);
    for (const auto& o : w.layout.objects)
      if (o.id != held.id && objects_penetrate(held, o)) return o.id;
  }
  return std::nullopt;
}

double width_along_stroke(const ArmModel& arm, const WorldState& w, const scene::ObjectInstance& o) {
  const RigidPose tcp = forward_kinematics(arm, w.q);
  const geom::Mat3 r = (tcp.rotation().conjugate() * o.pose.rotation()).toRotationMatrix();
  return 2.0 * r.row(1).cwiseAbs().dot(o.scaled_half_extents());
}

void step_inplace(const ArmModel& arm, WorldState& w, const Action& a) {
  WorldState next = w;
  if (a.kind == Action::Kind::joint_delta) {
    if (!a.delta.allFinite() || a.delta.cwiseAbs().maxCoeff() > arm.joint_delta_cap + 1e-12)
      raise(ErrorKind::ContractError, "joint delta exceeds the per-step cap");
    const JointVec q1 = w.q + a.delta;
    if (!within_limits(arm, q1)) raise(ErrorKind::JointLimit, "step would leave joint limits");
    for (int s = 1; s <= kSubsteps; ++s) {
      const JointVec qs = w.q + (static_cast<double>(s) / kSubsteps) * a.delta;
      if (auto hit = find_collision(arm, w, qs, w.gripper))
        raise(ErrorKind::CollisionError, "collision with " + *hit);
    }
    next.q = q1;
    if (next.attached) {
      auto& held = next.layout.at(*next.attached);
      held.pose = geom::compose(forward_kinematics(arm, q1), next.attach_offset);
    }
  } else {
    if (!std::isfinite(a.opening) || a.opening < 0 || a.opening > arm.max_stroke + 1e-12)
      raise(ErrorKind::ContractError, "gripper opening outside [0, max_stroke]");
    double target = a.opening;
    if (next.attached) {
      const double wdt = width_along_stroke(arm, w, w.layout.at(*w.attached));
      if (target > wdt + 1e-9) {
        const std::string id = *next.attached;
        next.attached.reset();
        settle(next, id);
      } else {
        target = wdt;
      }
    } else if (target < w.gripper) {
      const RigidPose tcp = forward_kinematics(arm, w.q);
      const RigidPose inv = tcp.inverse();
      for (const auto& o : w.layout.objects) {
        if (!graspable(o)) continue;
        const Vec3 c = inv.apply(o.pose.translation());
        const double wdt = width_along_stroke(arm, w, o);
        const bool in_gap = c.x() >= -arm.finger_length && c.x() <= arm.finger_tip &&
                            std::abs(c.z()) <= arm.pad_half_width + arm.grasp_margin &&
                            std::abs(c.y()) + 0.5 * wdt <= 0.5 * w.gripper + arm.grasp_margin;
        if (in_gap && target < wdt) {
          next.attached = o.id;
          next.attach_offset = geom::compose(inv, o.pose);
          target = wdt;
          break;
        }
      }
    }
    for (int s = 1; s <= kSubsteps; ++s) {
      const double g = w.gripper + (static_cast<double>(s) / kSubsteps) * (target - w.gripper);
      if (auto hit = find_collision(arm, next, w.q, g)) raise(ErrorKind::CollisionError, "collision with " + *hit);
    }
    next.gripper = target;
  }
  next.step_index = w.step_index + 1;
  w = std::move(next);
}

WorldState step(const ArmModel& arm, const WorldState& w, const Action& a) {
  WorldState out = w;
  step_inplace(arm, out, a);
  return out;
}

void perturb_object(const ArmModel& arm, WorldState& w, const std::string& id, const geom::Vec2& delta_xy,
                    double delta_yaw, const PerturbBounds& bounds) {
  const scene::ObjectInstance& orig = w.layout.at(id);
  if (w.attached && *w.attached == id) raise(ErrorKind::CannotPerturbAttached, "cannot perturb attached " + id);
  const scene::ObjectInstance* support = resting_on(w.layout, orig);
  const std::string support_id = support ? support->id : std::string();
  const auto valid = [&](const WorldState& cand) {
    const auto& o = cand.layout.at(id);
    if (!cand.layout.workspace.contains(o.aabb())) return false;
    if (!support_id.empty()) {
      const geom::Aabb fp = cand.layout.at(support_id).support_footprint();
      const Vec3 c = o.pose.translation();
      if (c.x() < fp.min.x() || c.x() > fp.max.x() || c.y() < fp.min.y() || c.y() > fp.max.y()) return false;
    }
    for (const auto& other : cand.layout.objects)
      if (other.id != id && objects_penetrate(o, other)) return false;
    return !find_collision(arm, cand, cand.q, cand.gripper);
  };
  geom::Vec2 d = delta_xy;
  double yaw = delta_yaw;
  for (int attempt = 0; attempt <= 100; ++attempt) {
    if (attempt > 0) {
      d = geom::Vec2(w.rng.sign() * w.rng.uniform(bounds.lo, bounds.hi), w.rng.sign() * w.rng.uniform(bounds.lo, bounds.hi));
      yaw = w.rng.uniform(bounds.yaw_lo, bounds.yaw_hi);
    }
    WorldState cand = w;
    auto& o = cand.layout.at(id);
    const Quat q = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())) * o.pose.rotation();
    o.pose = RigidPose(o.pose.translation() + Vec3(d.x(), d.y(), 0.0), q);
    if (valid(cand)) {
      cand.rng = w.rng;
      w = std::move(cand);
      return;
    }
  }
  raise(ErrorKind::PerturbInfeasible, "no valid perturbation of " + id + " within 100 tries");
}

std::string_view render_mode_name(RenderMode m) { return m == RenderMode::plain ? "plain" : "splat"; }

RenderMode parse_render_mode(std::string_view s) {
  if (s == "plain") return RenderMode::plain;
  if (s == "splat") return RenderMode::splat;
  raise(ErrorKind::InvalidArgument, "unknown render mode '" + std::string(s) + "'");
}

std::vector<splat::GaussianPrimitive> foreground_splats(const scene::SceneLayout& layout) {
  std::vector<splat::GaussianPrimitive> out;
  for (const auto& o : layout.objects) {
    Vec3 rgb(0.6, 0.6, 0.6);
    switch (o.asset) {
      case scene::Asset::box: rgb = Vec3(0.55, 0.45, 0.35); break;
      case scene::Asset::cylinder: rgb = Vec3(0.2, 0.4, 0.8); break;
      case scene::Asset::bin: rgb = Vec3(0.25, 0.6, 0.3); break;
      case scene::Asset::plug: rgb = Vec3(0.9, 0.2, 0.15); break;
      case scene::Asset::distractor: rgb = Vec3(0.85, 0.8, 0.2); break;
    }
    for (const auto& part : o.solid_parts()) {
      const double spacing = std::clamp(part.half.minCoeff(), 0.004, 0.02);
      auto s = splat::box_splats(part.pose, part.half, spacing, rgb);
      out.insert(out.end(), s.begin(), s.end());
    }
  }
  return out;
}

std::vector<splat::GaussianPrimitive> procedural_background(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xb6));
  std::vector<splat::GaussianPrimitive> out;
  // A wall behind the table and a floor below it, both cluttered.
  for (int i = 0; i < 1500; ++i) {
    splat::GaussianPrimitive g;
    const bool wall = i < 900;
    g.position = wall ? Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-0.9, -0.7), rng.uniform(-0.4, 1.2))
                      : Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-0.9, 1.2), rng.uniform(-0.8, -0.7));
    g.scale = Vec3(rng.uniform(0.01, 0.12), rng.uniform(0.01, 0.12), rng.uniform(0.005, 0.05));
    g.rotation = geom::uniform_quaternion(rng.uniform(), rng.uniform(), rng.uniform());
    g.opacity = rng.uniform(0.4, 1.0);
    g.sh_degree = 1;
    for (int ch = 0; ch < 3; ++ch) {
      g.sh(ch, 0) = rng.uniform(-1.2, 1.2);
      for (int b = 1; b < 4; ++b) g.sh(ch, b) = rng.uniform(-0.3, 0.3);
    }
    out.push_back(g);
  }
  return out;
}

Observation observe(const ArmModel& arm, const WorldState& w, const std::string& target_id,
                    const ObserveOptions& opts) {
  Observation ob;
  ob.q = w.q;
  ob.gripper = w.gripper;
  ob.tcp = forward_kinematics(arm, w.q);
  ob.wrist_camera = geom::compose(ob.tcp, arm.wrist_mount);
  ob.target_id = target_id;
  ob.target_pose = w.layout.at(target_id).pose;
  ob.world = &w;
  if (opts.render) {
    std::vector<splat::GaussianPrimitive> gs = foreground_splats(w.layout);
    splat::RenderOptions ro;
    ro.jobs = opts.jobs;
    if (opts.mode == RenderMode::splat && opts.background) {
      gs.insert(gs.end(), opts.background->begin(), opts.background->end());
      ro.background = Vec3::Zero();
    } else {
      ro.background = opts.plain_background;
    }
    splat::Camera wc = arm.wrist_camera;
    wc.pose = ob.wrist_camera;
    ob.head = splat::render(gs, arm.head_camera, ro);
    ob.wrist = splat::render(gs, wc, ro);
  }
  return ob;
}

}  // namespace s2r::sim
