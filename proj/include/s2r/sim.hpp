#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "s2r/common.hpp"
#include "s2r/geom.hpp"
#include "s2r/scene.hpp"
#include "s2r/splat.hpp"

namespace s2r::sim {

using geom::Quat;
using geom::RigidPose;
using geom::Vec3;
using JointVec = Eigen::Matrix<double, 6, 1>;

/// Standard DH row: Rz(q + offset) Tz(d) Tx(a) Rx(alpha). Angles in rad.
struct DhJoint {
  double a = 0, alpha = 0, d = 0, offset = 0;
  double lo = -kPi, hi = kPi;
};

/// Six revolute joints with a parallel two-finger gripper. The tool frame
/// sits `tcp_offset` along the flange z axis; its x axis points toward the
/// fingertips (flange z) and its y axis along the finger stroke (flange y).
struct ArmModel {
  std::array<DhJoint, 6> joints{};
  RigidPose base;
  double tcp_offset = 0.15;
  double max_stroke = 0.085;
  double finger_radius = 0.005;
  double finger_length = 0.09;
  double finger_tip = 0.005;   // finger extent past the TCP
  double pad_half_width = 0.01;
  double palm_radius = 0.01;
  double wrist_radius = 0.03;
  double link_radius = 0.035;
  double joint_delta_cap = 0.05;
  double grasp_margin = 0.002;
  splat::Camera head_camera;
  /// Wrist camera pose in the tool frame, intrinsics from `wrist_camera`.
  RigidPose wrist_mount;
  splat::Camera wrist_camera;

  void validate() const;
  /// Sum of link lengths plus the tool offset.
  double reach() const;
  std::uint64_t hash() const;
};

/// Line format, `#` comments:
///   base x y z yaw_deg
///   joint a alpha_deg d offset_deg lo_deg hi_deg      (six lines, base to flange)
///   tcp_offset m | max_stroke m | finger_radius m | finger_length m | ...
///   head_camera ex ey ez tx ty tz fx fy w h
///   wrist_camera x y z fx fy w h            (mount position in the tool frame)
ArmModel parse_arm(const std::string& text);
std::string arm_to_string(const ArmModel& arm);
ArmModel load_arm(const std::string& path);
/// The shipped embodiment (same contents as config/arm.cfg).
const ArmModel& default_arm();

/// Flange-to-tool transform.
RigidPose tcp_in_flange(const ArmModel& arm);
/// Throws JointLimit.
RigidPose forward_kinematics(const ArmModel& arm, const JointVec& q);
/// World positions of frames 0..6 (base, joint 1 .. flange).
std::array<Vec3, 7> frame_origins(const ArmModel& arm, const JointVec& q);
bool within_limits(const ArmModel& arm, const JointVec& q);

struct IkOptions {
  int max_iterations = 200;
  double damping = 1e-2;
  int restarts = 8;
  double pos_tol = 1e-4;
  double rot_tol = 1e-3;
  std::uint64_t restart_seed = 0x1c0ffee;
};

/// Damped least squares from `seed`, then seeded random restarts. Throws
/// Unreachable.
JointVec inverse_kinematics(const ArmModel& arm, const RigidPose& target, const JointVec& seed,
                            const IkOptions& opts = {});

struct Action {
  enum class Kind { joint_delta, gripper_set };
  Kind kind = Kind::joint_delta;
  JointVec delta = JointVec::Zero();
  double opening = 0.0;

  static Action joints(const JointVec& d) { return {Kind::joint_delta, d, 0.0}; }
  static Action gripper(double o) { return {Kind::gripper_set, JointVec::Zero(), o}; }
};

struct WorldState {
  scene::SceneLayout layout;
  JointVec q = JointVec::Zero();
  double gripper = 0.0;
  std::optional<std::string> attached;
  RigidPose attach_offset;  // object pose in the tool frame
  std::int64_t step_index = 0;
  Rng rng{0};
};

/// Home configuration, gripper fully open.
WorldState make_world(const ArmModel& arm, const scene::SceneLayout& layout, std::uint64_t seed);

/// First collision between the arm (or attached object) and the scene, if any.
std::optional<std::string> find_collision(const ArmModel& arm, const WorldState& w, const JointVec& q,
                                          double opening);

/// One action with an 8-substep swept collision check. Throws CollisionError,
/// JointLimit, ContractError (action above caps). Strong guarantee.
void step_inplace(const ArmModel& arm, WorldState& w, const Action& a);
WorldState step(const ArmModel& arm, const WorldState& w, const Action& a);

/// Width of an object along the tool y axis.
double width_along_stroke(const ArmModel& arm, const WorldState& w, const scene::ObjectInstance& o);

struct PerturbBounds {
  double lo = 0.02, hi = 0.2;               // per-component magnitude (m)
  double yaw_lo = -kPi, yaw_hi = kPi;       // rad
};

/// Moves one free object by (delta_xy, delta_yaw about world z). Invalid
/// results are resampled inside `bounds` up to 100 times. Throws
/// CannotPerturbAttached, PerturbInfeasible, UnknownId.
void perturb_object(const ArmModel& arm, WorldState& w, const std::string& id, const geom::Vec2& delta_xy,
                    double delta_yaw, const PerturbBounds& bounds = {});

enum class RenderMode { plain, splat };
std::string_view render_mode_name(RenderMode m);
RenderMode parse_render_mode(std::string_view s);

struct Observation {
  JointVec q = JointVec::Zero();
  double gripper = 0.0;
  RigidPose tcp;
  RigidPose wrist_camera;
  /// Privileged state standing in for perception.
  std::string target_id;
  RigidPose target_pose;
  const WorldState* world = nullptr;
  std::optional<splat::RenderResult> head, wrist;
};

struct ObserveOptions {
  bool render = false;
  RenderMode mode = RenderMode::plain;
  const std::vector<splat::GaussianPrimitive>* background = nullptr;
  Vec3 plain_background = Vec3(0.35, 0.35, 0.35);
  int jobs = 1;
};

Observation observe(const ArmModel& arm, const WorldState& w, const std::string& target_id,
                    const ObserveOptions& opts = {});
/// Splat approximation of every object in the layout.
std::vector<splat::GaussianPrimitive> foreground_splats(const scene::SceneLayout& layout);
/// Seeded textured backdrop behind the table.
std::vector<splat::GaussianPrimitive> procedural_background(std::uint64_t seed);

}  // namespace s2r::sim
