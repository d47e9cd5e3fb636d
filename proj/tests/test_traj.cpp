#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "s2r/traj.hpp"

using namespace s2r;
using namespace s2r::traj;
using sim::WorldState;

namespace {

const sim::ArmModel& arm() { return sim::default_arm(); }

AdversarialConfig adversarial(double probability = 0.7) {
  AdversarialConfig a;
  a.enabled = true;
  a.probability = probability;
  return a;
}

SubtaskSpec plug_grasp() { return sorting_task().subtasks.front(); }

scene::SceneLayout free_plug_layout(std::uint64_t seed = 3) {
  return scene::generate_layout(scene::sorting_task_spec(0), seed);
}

// Arm parked at the bottleneck pose of `spec`.
WorldState at_bottleneck(const scene::SceneLayout& layout, const SubtaskSpec& spec) {
  WorldState w = sim::make_world(arm(), layout, 2);
  w.gripper = spec.opening;
  const RigidPose b = compute_bottleneck_pose(layout, spec);
  // 2 mm inside the boundary, beyond the IK tolerance.
  const Vec3 inward = -0.002 * layout.at(spec.target).pose.apply_vector(spec.approach_axis);
  w.q = sim::inverse_kinematics(arm(), RigidPose(b.translation() + inward, b.rotation()), w.q);
  return w;
}

geom::Vec3 replay_tcp(WorldState w, const std::vector<JointVec>& path, std::vector<Vec3>* trace) {
  for (const auto& q : path) {
    sim::step_inplace(arm(), w, sim::Action::joints(q - w.q));
    if (trace) trace->push_back(sim::forward_kinematics(arm(), w.q).translation());
  }
  return sim::forward_kinematics(arm(), w.q).translation();
}

// Tags of one subtask must read approach* bottleneck (perturbation recovery* bottleneck)* interaction*.
bool well_ordered(const EpisodeRecord& e) {
  int subtask = -1;
  enum { approaching, arrived, recovering, interacting } st = approaching;
  for (std::size_t i = 0; i < e.steps.size(); ++i) {
    const auto& s = e.steps[i];
    if (s.subtask != subtask) {
      if (s.subtask < subtask) return false;
      subtask = s.subtask;
      st = approaching;
    }
    Event ev = s.event;
    if (ev == Event::failure) return i + 1 == e.steps.size() && !e.success;
    if (ev == Event::done) {
      if (i + 1 != e.steps.size() || st != interacting) return false;
      continue;
    }
    switch (ev) {
      case Event::approach:
        if (st != approaching) return false;
        break;
      case Event::bottleneck_reached:
        if (st != approaching && st != recovering) return false;
        st = arrived;
        break;
      case Event::perturbation:
        if (st != arrived) return false;
        st = recovering;
        break;
      case Event::recovery:
        if (st != recovering) return false;
        break;
      case Event::interaction:
        if (st != arrived && st != interacting) return false;
        st = interacting;
        break;
      default: return false;
    }
  }
  return true;
}

std::size_t distinct_wrist_views(const EpisodeRecord& e) {
  std::set<std::tuple<long, long, long, long, long, long>> seen;
  const double step = 5.0 * kPi / 180.0;
  for (const auto& s : e.steps) {
    const Vec3 p = s.obs.wrist_camera.translation();
    const Vec3 a = s.obs.wrist_camera.rotation_matrix().eulerAngles(2, 1, 0);
    seen.emplace(std::lround(p.x() / 0.01), std::lround(p.y() / 0.01), std::lround(p.z() / 0.01),
                 std::lround(a.x() / step), std::lround(a.y() / step), std::lround(a.z() / step));
  }
  return seen.size();
}

}  // namespace

TEST(Bottleneck, TopDownAxisCase) {
  const auto layout = free_plug_layout();
  SubtaskSpec spec = plug_grasp();
  spec.hemisphere.radius = 0.05;
  const RigidPose b = compute_bottleneck_pose(layout, spec);
  const Vec3 origin = layout.at("plug").pose.translation();
  EXPECT_LE((b.translation() - (origin + Vec3(0, 0, 0.05))).norm(), 1e-12);
  // Fingertips toward the object.
  EXPECT_LE((b.rotation_matrix().col(0) - Vec3(0, 0, -1)).norm(), 1e-12);
  EXPECT_TRUE(geom::in_bottleneck_hemisphere(b.translation(), layout.at("plug").pose, spec.hemisphere));
}

TEST(Bottleneck, FollowsThePerturbedFrame) {
  const auto layout = free_plug_layout();
  WorldState w = sim::make_world(arm(), layout, 4);
  const SubtaskSpec spec = plug_grasp();
  const RigidPose before = compute_bottleneck_pose(w.layout, spec);
  sim::perturb_object(arm(), w, "plug", geom::Vec2(0.1, 0.0), 0.0);
  const RigidPose after = compute_bottleneck_pose(w.layout, spec);
  EXPECT_LE((after.translation() - before.translation() - Vec3(0.1, 0, 0)).norm(), 1e-12);
  EXPECT_LE(geom::rotation_distance(before, after), 1e-12);
}

TEST(Bottleneck, MissingTarget) {
  SubtaskSpec spec = plug_grasp();
  spec.target = "nope";
  try {
    compute_bottleneck_pose(free_plug_layout(), spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TargetMissing);
  }
}

TEST(PlanApproach, GoalAtCurrentPoseIsEmpty) {
  const WorldState w = sim::make_world(arm(), free_plug_layout(), 1);
  EXPECT_LE(plan_approach(arm(), w, sim::forward_kinematics(arm(), w.q)).size(), 1u);
}

TEST(PlanApproach, StraightLineShrinksDistanceMonotonically) {
  const WorldState w = sim::make_world(arm(), free_plug_layout(), 1);
  const RigidPose start = sim::forward_kinematics(arm(), w.q);
  const RigidPose goal(start.translation() + Vec3(0.08, 0.04, -0.06), start.rotation());
  const auto path = plan_approach(arm(), w, goal);
  ASSERT_FALSE(path.empty());
  std::vector<Vec3> trace;
  const Vec3 end = replay_tcp(w, path, &trace);
  EXPECT_LE((end - goal.translation()).norm(), 1e-3);
  double prev = (start.translation() - goal.translation()).norm();
  for (const auto& p : trace) {
    const double d = (p - goal.translation()).norm();
    EXPECT_LE(d, prev + 2e-4);  // IK tolerance slack
    prev = d;
  }
  for (std::size_t i = 1; i < path.size(); ++i)
    EXPECT_LE((path[i] - path[i - 1]).cwiseAbs().maxCoeff(), arm().joint_delta_cap);
}

TEST(PlanApproach, GoalInsideBinWallFails) {
  const auto layout = free_plug_layout();
  const WorldState w = sim::make_world(arm(), layout, 1);
  const auto& bin = layout.at("bin_center");
  const Vec3 wall = bin.pose.apply(Vec3(bin.half_extents.x() - 0.005, 0, 0.0));
  // Top-down with the stroke along the wall, so both fingers sit inside it.
  geom::Mat3 r;
  r.col(0) = -Vec3::UnitZ();
  r.col(1) = Vec3::UnitY();
  r.col(2) = Vec3::UnitX();
  const RigidPose goal(wall, geom::Quat(r));
  try {
    plan_approach(arm(), w, goal);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PlanFailure);
  }
}

TEST(Interaction, GraspsAFreePlugAndLifts) {
  const auto layout = free_plug_layout();
  const SubtaskSpec spec = plug_grasp();
  WorldState w = at_bottleneck(layout, spec);
  const auto recs = execute_interaction(arm(), w, spec);
  ASSERT_FALSE(recs.empty());
  for (const auto& r : recs) EXPECT_EQ(r.event, Event::interaction);
  ASSERT_TRUE(w.attached);
  EXPECT_EQ(*w.attached, "plug");
  // Lifted back to the hemisphere boundary above the original grasp point.
  const Vec3 tcp = sim::forward_kinematics(arm(), w.q).translation();
  const Vec3 grasp = layout.at("plug").pose.translation();
  EXPECT_NEAR((tcp - grasp).z(), spec.hemisphere.radius, 1e-3);
  EXPECT_GT(w.layout.at("plug").pose.translation().z(), grasp.z() + 0.04);
}

TEST(Interaction, OutsideHemisphereIsAContractError) {
  const auto layout = free_plug_layout();
  WorldState w = sim::make_world(arm(), layout, 1);
  const JointVec q0 = w.q;
  try {
    execute_interaction(arm(), w, plug_grasp());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ContractError);
  }
  EXPECT_EQ(w.q, q0);
  EXPECT_EQ(w.step_index, 0);
}

TEST(Interaction, PlugFlushAgainstWallIsRecordedFailure) {
  TaskDef task = sorting_task(0);
  // Stroke along the wall normal, plug 1 mm from the +x inner wall.
  task.scene = scene::parse_task_spec(
      "workspace -0.45 -0.35 -0.06 0.45 0.35 0.5\n"
      "object table box 0.45 0.35 0.025 pose=0,0,-0.025,0\n"
      "object bin_center bin 0.15 0.12 0.05\n"
      "object bin_left bin 0.1 0.1 0.04\n"
      "object plug plug 0.022 0.011 0.012\n"
      "pose2D bin_center x=[0,0] y=[0.1,0.1] yaw=[0,0]\n"
      "place_on_surface bin_center table\n"
      "pose2D bin_left x=[-0.32,-0.32] y=[0.1,0.1] yaw=[0,0]\n"
      "place_to_left bin_left bin_center\n"
      "pose2D plug x=[0.128,0.128] y=[0.1,0.1] yaw=[90,90]\n"
      "with_obstacles plug - bin_center\n");
  const EpisodeRecord e = generate_episode(arm(), task, 1, AdversarialConfig{});
  EXPECT_FALSE(e.success);
  ASSERT_FALSE(e.steps.empty()) << e.failure_reason;
  EXPECT_EQ(e.steps.back().event, Event::failure);
  // The wall stops the fingers in the approach descent or the interaction.
  const bool named = e.failure_reason.find("collision with bin_center") != std::string::npos ||
                     e.failure_reason.rfind("GraspFailure", 0) == 0;
  EXPECT_TRUE(named) << e.failure_reason;
}

TEST(Perturbation, MagnitudesSignsAndYawRange) {
  const AdversarialConfig cfg = adversarial();
  Rng rng(77);
  double sum = 0, ymin = 1e9, ymax = -1e9;
  int negative = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Perturbation p = sample_perturbation(cfg, rng);
    for (int k = 0; k < 2; ++k) {
      ASSERT_GE(std::abs(p.delta[k]), 0.02);
      ASSERT_LE(std::abs(p.delta[k]), 0.2);
    }
    sum += std::abs(p.delta.x());
    negative += p.delta.x() < 0 ? 1 : 0;
    ymin = std::min(ymin, p.yaw);
    ymax = std::max(ymax, p.yaw);
  }
  EXPECT_NEAR(sum / n, 0.11, 0.005);
  EXPECT_NEAR(negative / double(n), 0.5, 0.02);
  EXPECT_LT(ymin, -170.0 * kPi / 180.0);
  EXPECT_GT(ymax, 170.0 * kPi / 180.0);
}

TEST(Perturbation, ConfigValidation) {
  AdversarialConfig a = adversarial();
  a.max_interventions = 4;
  EXPECT_THROW(a.validate(), Error);
  a = adversarial(1.5);
  EXPECT_THROW(a.validate(), Error);
  a = adversarial();
  a.lo = 0.3;
  EXPECT_THROW(a.validate(), Error);
}

TEST(Episode, DisabledAdversaryNeverPerturbs) {
  for (const auto& e : generate_batch(arm(), sorting_task(), 20, AdversarialConfig{}, 0)) {
    EXPECT_TRUE(e.interventions.empty());
    for (const auto& s : e.steps) EXPECT_NE(s.event, Event::perturbation);
  }
}

TEST(Episode, CertainInterventionCountIsMinOfThreeAndArrivals) {
  for (const auto& e : generate_batch(arm(), sorting_task(), 30, adversarial(1.0), 100)) {
    EXPECT_EQ(static_cast<int>(e.interventions.size()), std::min(3, e.bottleneck_arrivals)) << e.seed;
  }
}

TEST(Episode, CupPlaceOrderingAndContracts) {
  const TaskDef task = cup_place_task();
  ASSERT_EQ(task.subtasks.size(), 2u);
  int successes = 0;
  for (const auto& e : generate_batch(arm(), task, 40, adversarial(), 0)) {
    EXPECT_TRUE(well_ordered(e)) << e.seed;
    EXPECT_LE(e.interventions.size(), 3u);
    successes += e.success ? 1 : 0;
    const auto specs = episode_subtasks(task, e.seed);
    for (std::size_t i = 0; i + 1 < e.steps.size(); ++i) {
      const auto& s = e.steps[i];
      if (s.event == Event::bottleneck_reached) {
        // The record after an arrival observes the state the arrival produced.
        const auto& next = e.steps[i + 1].obs;
        EXPECT_TRUE(geom::in_bottleneck_hemisphere(next.tcp.translation(), next.target_pose,
                                                   specs[s.subtask].hemisphere))
            << e.seed << " step " << i;
      }
    }
    // Each recovery ends at the moved target.
    for (const auto& iv : e.interventions) {
      const auto& pre = e.steps[iv.step].obs.target_pose;
      std::size_t j = iv.step + 1;
      while (j < e.steps.size() && e.steps[j].event != Event::bottleneck_reached && e.steps[j].event != Event::failure) ++j;
      ASSERT_LT(j, e.steps.size());
      if (e.steps[j].event == Event::failure) {
        EXPECT_FALSE(e.success);
        continue;
      }
      const auto& at = e.steps[j + 1].obs.target_pose;
      EXPECT_LE((at.translation().head<2>() - pre.translation().head<2>() - iv.applied.delta).norm(), 1e-9);
    }
  }
  EXPECT_GE(successes, 30);
}

TEST(Episode, AdversaryDiversifiesWristViews) {
  double plain = 0, adv = 0;
  const std::size_t n = 30;
  for (const auto& e : generate_batch(arm(), sorting_task(), n, AdversarialConfig{}, 0))
    plain += distinct_wrist_views(e);
  for (const auto& e : generate_batch(arm(), sorting_task(), n, adversarial(), 0)) adv += distinct_wrist_views(e);
  EXPECT_GT(adv / n, plain / n);
}

TEST(Episode, BatchIsDeterministicAcrossJobs) {
  const auto a = generate_batch(arm(), sorting_task(), 6, adversarial(), 40, {}, 1);
  const auto b = generate_batch(arm(), sorting_task(), 6, adversarial(), 40, {}, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].seed, 40 + i);
    EXPECT_EQ(episode_to_string(a[i]), episode_to_string(b[i]));
  }
}

TEST(Episode, SuccessOnlyFilter) {
  const auto all = generate_batch(arm(), sorting_task(), 20, adversarial(), 0);
  const auto ok = generate_batch(arm(), sorting_task(), 20, adversarial(), 0, {}, 1, true);
  std::size_t expected = 0;
  for (const auto& e : all) expected += e.success ? 1 : 0;
  EXPECT_EQ(ok.size(), expected);
  EXPECT_LT(ok.size(), all.size());
  for (const auto& e : ok) EXPECT_TRUE(e.success);
}

TEST(EpisodeFile, RoundTrip) {
  for (const auto& e : generate_batch(arm(), sorting_task(), 8, adversarial(), 7)) {
    const std::string text = episode_to_string(e);
    const EpisodeRecord back = parse_episode(text);
    EXPECT_EQ(episode_to_string(back), text);
    EXPECT_EQ(back.success, e.success);
    EXPECT_EQ(back.failure_reason, e.failure_reason);
    EXPECT_EQ(back.steps.size(), e.steps.size());
    EXPECT_EQ(back.interventions.size(), e.interventions.size());
  }
}

TEST(EpisodeFile, TruncationNamesTheLine) {
  const auto e = generate_episode(arm(), sorting_task(), 2, AdversarialConfig{});
  std::string text = episode_to_string(e);
  text.resize(text.size() / 2);
  text.resize(text.rfind('\n'));
  try {
    parse_episode(text, "ep.txt");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::ParseError);
    EXPECT_EQ(std::string(err.what()).rfind("ep.txt:", 0), 0u) << err.what();
  }
}
