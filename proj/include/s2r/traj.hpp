#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s2r/geom.hpp"
#include "s2r/scene.hpp"
#include "s2r/sim.hpp"

namespace s2r::traj {

using geom::RigidPose;
using geom::Vec2;
using geom::Vec3;
using sim::JointVec;

enum class SubtaskKind { grasp, place };

/// One object-centric stage. For a grasp the target is the object to pick;
/// for a place it is the receptacle, and the hemisphere center is the TCP
/// release point in the receptacle frame.
struct SubtaskSpec {
  SubtaskKind kind = SubtaskKind::grasp;
  std::string target;
  Vec3 approach_axis = Vec3::UnitZ();  // in the target frame
  double standoff = 0.1;               // hover distance before the final descent, >= radius
  double opening = 0.035;              // gripper opening during the approach (grasp) or at release (place)
  geom::HemisphereSpec hemisphere;
  /// Release-point range in the receptacle frame (place only).
  std::optional<geom::Aabb> placement;

  void validate() const;
};

struct TaskDef {
  std::string name;
  scene::TaskSpec scene;
  std::vector<SubtaskSpec> subtasks;
};

/// Plug into the left bin.
TaskDef sorting_task(int n_distractors = 3, bool skewed_yaw = true);
/// Cup onto the coaster.
TaskDef cup_place_task();
/// "sorting" or "cup_place".
TaskDef task_by_name(const std::string& name);

struct AdversarialConfig {
  bool enabled = false;
  double lo = 0.02, hi = 0.2;                 // per-component magnitude (m)
  double yaw_lo = -kPi, yaw_hi = kPi;         // rad
  int max_interventions = 3;
  double probability = 0.7;                   // per bottleneck arrival
  bool one_sided = false;                     // positive components only

  void validate() const;
  sim::PerturbBounds bounds() const { return {lo, hi, yaw_lo, yaw_hi}; }
};

struct Perturbation {
  Vec2 delta = Vec2::Zero();
  double yaw = 0.0;
};

/// Independent uniform magnitudes with random signs, uniform yaw.
Perturbation sample_perturbation(const AdversarialConfig& cfg, Rng& rng);

/// TCP pose where the approach enters the hemisphere: O_A + R(center + d axis),
/// x_T = -R axis, stroke along the target's y axis (sign toward world +x).
/// Throws TargetMissing.
RigidPose compute_bottleneck_pose(const scene::SceneLayout& layout, const SubtaskSpec& spec);

struct PlanOptions {
  double step_length = 0.01;  // m of TCP travel per waypoint
  double step_angle = 0.05;   // rad of TCP rotation per waypoint
  double lift = 0.15;         // safe height above the goal for the fallback route
  double max_joint_jump = 0.5;
  sim::IkOptions ik;
};

/// Joint waypoints after the current configuration, each within the per-step
/// cap and collision-free when stepped. Straight TCP line first, then a
/// lift/traverse/descend route. Throws PlanFailure.
std::vector<JointVec> plan_approach(const sim::ArmModel& arm, const sim::WorldState& w, const RigidPose& goal,
                                    const PlanOptions& opts = {});
/// Straight TCP line only. Throws PlanFailure.
std::vector<JointVec> plan_line(const sim::ArmModel& arm, const sim::WorldState& w, const RigidPose& goal,
                                const PlanOptions& opts = {});

enum class Event { approach, bottleneck_reached, perturbation, recovery, interaction, done, failure };
std::string_view event_name(Event e);
Event parse_event(std::string_view s);

/// What the recorder keeps of an Observation.
struct ObsRecord {
  JointVec q = JointVec::Zero();
  double gripper = 0.0;
  RigidPose tcp;
  std::string target_id;
  RigidPose target_pose;
  RigidPose wrist_camera;
  std::string head_image = "-", wrist_image = "-";
};

ObsRecord record_observation(const sim::Observation& o);

/// Observation before the action. Failure records carry the action that
/// failed (not applied); perturbation records carry a zero delta.
struct StepRecord {
  int subtask = 0;
  Event event = Event::approach;
  sim::Action action;
  ObsRecord obs;
};

struct InterventionRecord {
  int subtask = 0;
  std::size_t step = 0;  // index of the perturbation record
  std::string object;
  Perturbation requested, applied;
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::string task;
  std::string preset = "custom";
  std::string domain = "sim";
  std::uint64_t arm_hash = 0;
  scene::SceneLayout layout;  // initial
  std::vector<StepRecord> steps;
  std::vector<InterventionRecord> interventions;
  int bottleneck_arrivals = 0;
  bool success = false;
  std::string failure_reason;
};

std::string episode_to_string(const EpisodeRecord& e);
/// `source` names the file in ParseError messages.
EpisodeRecord parse_episode(const std::string& text, const std::string& source = "episode");

/// Observation rendering during generation.
struct GenOptions {
  bool render = false;
  sim::RenderMode mode = sim::RenderMode::plain;
  int render_every = 10;
  double camera_scale = 1.0;
  Vec3 plain_background = Vec3(0.35, 0.35, 0.35);
  /// Dataset root for image files; rendering is skipped when empty.
  std::string image_root;
  std::string preset = "custom";
  std::string domain = "sim";
  PlanOptions plan;
  double retract_factor = 2.0;  // recovery retract distance in units of the radius
};

/// Runs one interaction primitive from inside the hemisphere. Throws
/// ContractError when the TCP is outside, GraspFailure, PlanFailure,
/// CollisionError.
std::vector<StepRecord> execute_interaction(const sim::ArmModel& arm, sim::WorldState& w, const SubtaskSpec& spec,
                                            int subtask_index = 0, const PlanOptions& opts = {});

/// Subtasks resolved for one episode (placement points drawn).
std::vector<SubtaskSpec> resolve_subtasks(const TaskDef& task, Rng& rng);
/// The subtasks generate_episode uses for `seed`.
std::vector<SubtaskSpec> episode_subtasks(const TaskDef& task, std::uint64_t seed);

EpisodeRecord generate_episode(const sim::ArmModel& arm, const TaskDef& task, std::uint64_t seed,
                               const AdversarialConfig& adv, const GenOptions& opts = {});

/// Seeds base_seed .. base_seed + n - 1, ordered by seed for any `jobs`.
std::vector<EpisodeRecord> generate_batch(const sim::ArmModel& arm, const TaskDef& task, std::size_t n,
                                          const AdversarialConfig& adv, std::uint64_t base_seed,
                                          const GenOptions& opts = {}, unsigned jobs = 1,
                                          bool success_only = false);

/// Subtask completion test used by the generator and the evaluator.
bool placed_in(const scene::SceneLayout& layout, const std::string& object, const std::string& receptacle);

}  // namespace s2r::traj
