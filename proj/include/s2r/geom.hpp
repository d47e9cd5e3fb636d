#pragma once

#include <array>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace s2r::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// SE(3) element. The quaternion is renormalized on every construction, so a
/// RigidPose is always a valid rigid transform.
///
/// Interchange order is [tx, ty, tz, qw, qx, qy, qz].
class RigidPose {
 public:
  RigidPose() : t_(Vec3::Zero()), q_(Quat::Identity()) {}
  RigidPose(const Vec3& translation, const Quat& rotation);

  static RigidPose identity() { return {}; }
  static RigidPose translation_only(double x, double y, double z);
  /// Rotation about +z by `yaw` radians, then translation.
  static RigidPose from_yaw(double yaw, const Vec3& translation = Vec3::Zero());
  static RigidPose from_array(const std::array<double, 7>& v);

  const Vec3& translation() const { return t_; }
  const Quat& rotation() const { return q_; }
  Mat3 rotation_matrix() const { return q_.toRotationMatrix(); }

  RigidPose inverse() const;
  Vec3 apply(const Vec3& x) const { return q_ * x + t_; }
  Vec3 apply_vector(const Vec3& v) const { return q_ * v; }

  /// Heading of the rotated +x axis projected onto the xy-plane.
  double yaw() const;

  std::array<double, 7> to_array() const;

 private:
  Vec3 t_;
  Quat q_;
};

/// Applies b first, then a.
RigidPose compose(const RigidPose& a, const RigidPose& b);
RigidPose invert(const RigidPose& p);
Vec3 transform_point(const RigidPose& p, const Vec3& x);

/// Angle of the relative rotation (radians, in [0, pi]).
double rotation_distance(const Quat& a, const Quat& b);
inline double rotation_distance(const RigidPose& a, const RigidPose& b) {
  return rotation_distance(a.rotation(), b.rotation());
}
double translation_distance(const RigidPose& a, const RigidPose& b);

/// Shoemake's uniform rotation from three uniforms in [0,1).
Quat uniform_quaternion(double u1, double u2, double u3);

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Aabb() = default;
  /// Throws InvalidArgument unless min <= max componentwise.
  Aabb(const Vec3& lo, const Vec3& hi);

  static Aabb from_center(const Vec3& center, const Vec3& half_extents);

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool contains(const Vec3& p) const;
  bool contains(const Aabb& b) const;
  Aabb translated(const Vec3& d) const { return {min + d, max + d}; }
  Aabb expanded(double margin) const;
};

/// Closed-interval overlap on all three axes; touching faces intersect.
bool aabb_intersect(const Aabb& a, const Aabb& b);
/// Positive-volume overlap deeper than `tol` on every axis.
bool aabb_penetrate(const Aabb& a, const Aabb& b, double tol = 1e-6);

/// Tight axis-aligned bound of a box with the given half extents at `pose`.
Aabb oriented_box_aabb(const RigidPose& pose, const Vec3& half_extents);

/// Conservative capsule-vs-box test: the segment [a, b] against the box
/// inflated by `radius` (slab clipping). Only penetration deeper than `tol`
/// counts.
bool capsule_hits_aabb(const Vec3& a, const Vec3& b, double radius, const Aabb& box,
                       double tol = 1e-6);

/// Box with center and axes given by `pose`.
struct Obb {
  RigidPose pose;
  Vec3 half = Vec3::Zero();
};

/// Separating-axis test; only overlap deeper than `tol` on every axis counts.
bool obb_penetrate(const Obb& a, const Obb& b, double tol = 1e-6);

/// capsule_hits_aabb evaluated in the box frame.
bool capsule_hits_obb(const Vec3& a, const Vec3& b, double radius, const Obb& box, double tol = 1e-6);

/// Closed upper half-ball around the object-frame center.
struct HemisphereSpec {
  Vec3 center = Vec3::Zero();
  double radius = 0.05;
  Vec3 axis = Vec3::UnitZ();

  /// Throws InvalidArgument unless radius > 0 and the axis is unit-norm within 1e-9.
  void validate() const;
};

bool in_bottleneck_hemisphere(const Vec3& tcp_world, const RigidPose& object_pose,
                              const HemisphereSpec& spec);

std::string pose_to_string(const RigidPose& p);

}  // namespace s2r::geom
