#include "s2r/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "s2r/common.hpp"

namespace s2r::geom {

RigidPose::RigidPose(const Vec3& translation, const Quat& rotation) : t_(translation), q_(rotation) {
  const double n = q_.norm();
  if (!std::isfinite(n) || n < 1e-12 || !t_.allFinite())
    raise(ErrorKind::InvalidArgument, "RigidPose: non-finite translation or degenerate quaternion");
  // Already-unit input is kept bit-exact so serialized poses round-trip.
  if (std::abs(n - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) q_.coeffs() /= n;
}

RigidPose RigidPose::translation_only(double x, double y, double z) {
  return {Vec3(x, y, z), Quat::Identity()};
}

RigidPose RigidPose::from_yaw(double yaw, const Vec3& translation) {
  return {translation, Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()))};
}

RigidPose RigidPose::from_array(const std::array<double, 7>& v) {
  return {Vec3(v[0], v[1], v[2]), Quat(v[3], v[4], v[5], v[6])};
}

RigidPose RigidPose::inverse() const {
  const Quat qi = q_.conjugate();
  return {-(qi * t_), qi};
}

double RigidPose::yaw() const {
  const Vec3 x = q_ * Vec3::UnitX();
  return std::atan2(x.y(), x.x());
}

std::array<double, 7> RigidPose::to_array() const {
  return {t_.x(), t_.y(), t_.z(), q_.w(), q_.x(), q_.y(), q_.z()};
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return {a.rotation() * b.translation() + a.translation(), a.rotation() * b.rotation()};
}

RigidPose invert(const RigidPose& p) { return p.inverse(); }

Vec3 transform_point(const RigidPose& p, const Vec3& x) { return p.apply(x); }

double rotation_distance(const Quat& a, const Quat& b) {
  // atan2 keeps full precision near zero, where acos of the dot loses half the digits.
  const Quat r = a.normalized().conjugate() * b.normalized();
  return 2.0 * std::atan2(r.vec().norm(), std::abs(r.w()));
}

double translation_distance(const RigidPose& a, const RigidPose& b) {
  return (a.translation() - b.translation()).norm();
}

Quat uniform_quaternion(double u1, double u2, double u3) {
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * kPi * u2, t3 = 2.0 * kPi * u3;
  return Quat(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
}

Aabb::Aabb(const Vec3& lo, const Vec3& hi) : min(lo), max(hi) {
  if ((lo.array() > hi.array()).any())
    raise(ErrorKind::InvalidArgument, "Aabb: min must not exceed max");
}

Aabb Aabb::from_center(const Vec3& center, const Vec3& half_extents) {
  return {center - half_extents, center + half_extents};
}

bool Aabb::contains(const Vec3& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

bool Aabb::contains(const Aabb& b) const {
  return (b.min.array() >= min.array()).all() && (b.max.array() <= max.array()).all();
}

Aabb Aabb::expanded(double margin) const {
  const Vec3 m = Vec3::Constant(margin);
  Vec3 lo = min - m, hi = max + m;
  // Negative margins may collapse a thin box; keep it a valid (degenerate) box.
  for (int i = 0; i < 3; ++i)
    if (lo[i] > hi[i]) lo[i] = hi[i] = 0.5 * (lo[i] + hi[i]);
  return {lo, hi};
}

bool aabb_intersect(const Aabb& a, const Aabb& b) {
  return (a.min.array() <= b.max.array()).all() && (b.min.array() <= a.max.array()).all();
}

bool aabb_penetrate(const Aabb& a, const Aabb& b, double tol) {
  for (int i = 0; i < 3; ++i) {
    const double overlap = std::min(a.max[i], b.max[i]) - std::max(a.min[i], b.min[i]);
    if (overlap <= tol) return false;
  }
  return true;
}

Aabb oriented_box_aabb(const RigidPose& pose, const Vec3& half_extents) {
  const Vec3 e = pose.rotation_matrix().cwiseAbs() * half_extents;
  return Aabb::from_center(pose.translation(), e);
}

bool capsule_hits_aabb(const Vec3& a, const Vec3& b, double radius, const Aabb& box, double tol) {
  const Vec3 lo = box.min.array() - (radius - tol);
  const Vec3 hi = box.max.array() + (radius - tol);
  if ((lo.array() >= hi.array()).any()) return false;
  const Vec3 d = b - a;
  double t0 = 0.0, t1 = 1.0;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (a[i] <= lo[i] || a[i] >= hi[i]) return false;
      continue;
    }
    double ta = (lo[i] - a[i]) / d[i];
    double tb = (hi[i] - a[i]) / d[i];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

bool obb_penetrate(const Obb& a, const Obb& b, double tol) {
  const Mat3 ra = a.pose.rotation().toRotationMatrix();
  const Mat3 rb = b.pose.rotation().toRotationMatrix();
  const Vec3 t = b.pose.translation() - a.pose.translation();
  const auto overlaps = [&](const Vec3& axis) {
    const double n = axis.norm();
    if (n < 1e-9) return true;
    const Vec3 l = axis / n;
    const double pa = (ra.transpose() * l).cwiseAbs().dot(a.half);
    const double pb = (rb.transpose() * l).cwiseAbs().dot(b.half);
    return pa + pb - std::abs(t.dot(l)) > tol;
  };
  for (int i = 0; i < 3; ++i)
    if (!overlaps(ra.col(i)) || !overlaps(rb.col(i))) return false;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!overlaps(ra.col(i).cross(rb.col(j)))) return false;
  return true;
}

bool capsule_hits_obb(const Vec3& a, const Vec3& b, double radius, const Obb& box, double tol) {
  const RigidPose inv = box.pose.inverse();
  return capsule_hits_aabb(inv.apply(a), inv.apply(b), radius, Aabb(-box.half, box.half), tol);
}

void HemisphereSpec::validate() const {
  if (!(radius > 0.0)) raise(ErrorKind::InvalidArgument, "HemisphereSpec: radius must be > 0");
  if (std::abs(axis.norm() - 1.0) > 1e-9)
    raise(ErrorKind::InvalidArgument, "HemisphereSpec: axis must be unit-norm");
}

bool in_bottleneck_hemisphere(const Vec3& tcp_world, const RigidPose& object_pose,
                              const HemisphereSpec& spec) {
  const Vec3 rel = object_pose.inverse().apply(tcp_world) - spec.center;
  // 1e-12 m of slack keeps computed boundary points inside despite rounding.
  constexpr double kSlack = 1e-12;
  return rel.norm() <= spec.radius + kSlack && rel.dot(spec.axis) >= -kSlack;
}

std::string pose_to_string(const RigidPose& p) {
  std::ostringstream ss;
  const auto a = p.to_array();
  for (std::size_t i = 0; i < a.size(); ++i) ss << (i ? " " : "") << fmt_double(a[i]);
  return ss.str();
}

}  // namespace s2r::geom
