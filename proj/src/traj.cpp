#include "s2r/traj.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

namespace s2r::traj {

namespace {

// Arrival goal sits this far inside the hemisphere so IK tolerance cannot miss it.
constexpr double kArrivalInset = 0.002;

Vec3 world_axis(const scene::SceneLayout& layout, const SubtaskSpec& spec) {
  return layout.at(spec.target).pose.apply_vector(spec.approach_axis);
}

RigidPose shifted(const RigidPose& p, const Vec3& d) { return RigidPose(p.translation() + d, p.rotation()); }

RigidPose interpolate(const RigidPose& a, const RigidPose& b, double s) {
  return RigidPose(a.translation() + s * (b.translation() - a.translation()), a.rotation().slerp(s, b.rotation()));
}

bool tcp_in_hemisphere(const sim::ArmModel& arm, const sim::WorldState& w, const SubtaskSpec& spec) {
  return geom::in_bottleneck_hemisphere(sim::forward_kinematics(arm, w.q).translation(),
                                        w.layout.at(spec.target).pose, spec.hemisphere);
}

// Subtask grasp or release pose: the hemisphere center with the bottleneck orientation.
RigidPose contact_pose(const scene::SceneLayout& layout, const SubtaskSpec& spec) {
  const RigidPose b = compute_bottleneck_pose(layout, spec);
  return shifted(b, -spec.hemisphere.radius * world_axis(layout, spec));
}

std::string pose_tokens(const RigidPose& p) {
  std::string s;
  for (double v : p.to_array()) s += " " + fmt_double(v);
  return s;
}

}  // namespace

void SubtaskSpec::validate() const {
  if (target.empty()) raise(ErrorKind::InvalidArgument, "subtask needs a target");
  if (std::abs(approach_axis.norm() - 1.0) > 1e-9) raise(ErrorKind::InvalidArgument, "approach axis must be unit");
  hemisphere.validate();
  if (standoff < hemisphere.radius) raise(ErrorKind::InvalidArgument, "standoff must be at least the radius");
  if (!(opening >= 0)) raise(ErrorKind::InvalidArgument, "opening must be >= 0");
  if (kind == SubtaskKind::place && !placement) raise(ErrorKind::InvalidArgument, "place subtask needs a range");
}

TaskDef sorting_task(int n_distractors, bool skewed_yaw) {
  TaskDef t;
  t.name = "sorting";
  t.scene = scene::sorting_task_spec(n_distractors, skewed_yaw);
  SubtaskSpec grasp;
  grasp.opening = 0.03;  // 4 mm clearance per side around the plug
  grasp.target = "plug";
  SubtaskSpec place;
  place.kind = SubtaskKind::place;
  place.target = "bin_left";
  // Release point high enough for the palm to clear the rim; the plug then settles on the floor.
  place.placement = geom::Aabb(Vec3(-0.04, -0.04, 0.015), Vec3(0.04, 0.04, 0.015));
  t.subtasks = {grasp, place};
  return t;
}

TaskDef cup_place_task() {
  TaskDef t;
  t.name = "cup_place";
  t.scene = scene::cup_place_task_spec();
  SubtaskSpec grasp;
  grasp.target = "cup";
  grasp.opening = 0.06;
  SubtaskSpec place;
  place.kind = SubtaskKind::place;
  place.target = "coaster";
  place.opening = 0.06;
  place.placement = geom::Aabb(Vec3(-0.01, -0.01, 0.044), Vec3(0.01, 0.01, 0.044));
  t.subtasks = {grasp, place};
  return t;
}

TaskDef task_by_name(const std::string& name) {
  if (name == "sorting") return sorting_task();
  if (name == "cup_place") return cup_place_task();
  raise(ErrorKind::InvalidArgument, "unknown task '" + name + "'");
}

void AdversarialConfig::validate() const {
  if (!(0 < lo && lo <= hi)) raise(ErrorKind::InvalidArgument, "perturbation range needs 0 < lo <= hi");
  if (!(yaw_lo <= yaw_hi)) raise(ErrorKind::InvalidArgument, "yaw range needs lo <= hi");
  if (max_interventions < 0 || max_interventions > 3)
    raise(ErrorKind::InvalidArgument, "max_interventions must be in [0, 3]");
  if (!(probability >= 0 && probability <= 1)) raise(ErrorKind::InvalidArgument, "probability must be in [0, 1]");
}

Perturbation sample_perturbation(const AdversarialConfig& cfg, Rng& rng) {
  Perturbation p;
  for (int i = 0; i < 2; ++i) {
    const double m = rng.uniform(cfg.lo, cfg.hi);
    p.delta[i] = cfg.one_sided ? m : rng.sign() * m;
  }
  p.yaw = rng.uniform(cfg.yaw_lo, cfg.yaw_hi);
  return p;
}

RigidPose compute_bottleneck_pose(const scene::SceneLayout& layout, const SubtaskSpec& spec) {
  const scene::ObjectInstance* o = layout.find(spec.target);
  if (!o) raise(ErrorKind::TargetMissing, "target '" + spec.target + "' not in layout");
  spec.hemisphere.validate();
  const geom::Mat3 r = o->pose.rotation_matrix();
  const Vec3 axis = r * spec.hemisphere.axis;
  const Vec3 pos = o->pose.apply(spec.hemisphere.center) + spec.hemisphere.radius * axis;
  const Vec3 x = -(r * spec.approach_axis);
  // Stroke along the object's y axis, made orthogonal to x.
  Vec3 y = r.col(1) - r.col(1).dot(x) * x;
  if (y.norm() < 1e-9) y = r.col(0) - r.col(0).dot(x) * x;
  y.normalize();
  const double sx = y.dot(Vec3::UnitX());
  if (sx < -1e-9 || (std::abs(sx) <= 1e-9 && y.dot(Vec3::UnitY()) < 0)) y = -y;
  geom::Mat3 m;
  m.col(0) = x;
  m.col(1) = y;
  m.col(2) = x.cross(y);
  return RigidPose(pos, geom::Quat(m));
}

namespace {

// Collisions surface as PlanFailure for planning, or unchanged for scripted contact motion.
std::vector<JointVec> line_path(const sim::ArmModel& arm, const sim::WorldState& w, const RigidPose& goal,
                                const PlanOptions& opts, bool collisions_propagate) {
  const RigidPose start = sim::forward_kinematics(arm, w.q);
  const double dist = geom::translation_distance(start, goal);
  const double ang = geom::rotation_distance(start, goal);
  std::vector<JointVec> path;
  if (dist < 1e-9 && ang < 1e-9) return path;
  const int n = std::max({1, static_cast<int>(std::ceil(dist / opts.step_length)),
                          static_cast<int>(std::ceil(ang / opts.step_angle))});
  sim::WorldState scratch = w;
  for (int i = 1; i <= n; ++i) {
    const RigidPose pose = interpolate(start, goal, static_cast<double>(i) / n);
    JointVec qi;
    try {
      qi = sim::inverse_kinematics(arm, pose, scratch.q, opts.ik);
    } catch (const Error& e) {
      raise(ErrorKind::PlanFailure, std::string("line plan: ") + e.what());
    }
    const JointVec d = qi - scratch.q;
    const double big = d.cwiseAbs().maxCoeff();
    if (big > opts.max_joint_jump) raise(ErrorKind::PlanFailure, "line plan: IK branch jump");
    const int m = std::max(1, static_cast<int>(std::ceil(big / (arm.joint_delta_cap * (1 - 1e-9)))));
    const JointVec sub = d / m;
    for (int j = 0; j < m; ++j) {
      try {
        sim::step_inplace(arm, scratch, sim::Action::joints(sub));
      } catch (const Error& e) {
        if (collisions_propagate && e.kind() == ErrorKind::CollisionError) throw;
        raise(ErrorKind::PlanFailure, std::string("line plan: ") + e.what());
      }
      path.push_back(scratch.q);
    }
  }
  return path;
}

}  // namespace

std::vector<JointVec> plan_line(const sim::ArmModel& arm, const sim::WorldState& w, const RigidPose& goal,
                                const PlanOptions& opts) {
  return line_path(arm, w, goal, opts, false);
}

std::vector<JointVec> plan_approach(const sim::ArmModel& arm, const sim::WorldState& w, const RigidPose& goal,
                                    const PlanOptions& opts) {
  try {
    sim::inverse_kinematics(arm, goal, w.q, opts.ik);
  } catch (const Error& e) {
    raise(ErrorKind::PlanFailure, std::string("goal unreachable: ") + e.what());
  }
  try {
    return plan_line(arm, w, goal, opts);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::PlanFailure) throw;
  }
  // Lower traverses first: high ones push the arm toward full extension.
  const RigidPose start = sim::forward_kinematics(arm, w.q);
  std::optional<Error> last;
  for (const double frac : {1.0 / 3.0, 2.0 / 3.0, 1.0}) {
    const double z = std::max(start.translation().z(), goal.translation().z() + frac * opts.lift);
    const RigidPose lift(Vec3(start.translation().x(), start.translation().y(), z), start.rotation());
    const RigidPose over(Vec3(goal.translation().x(), goal.translation().y(), z), goal.rotation());
    std::vector<JointVec> path;
    sim::WorldState scratch = w;
    try {
      for (const RigidPose& via : {lift, over, goal}) {
        const auto seg = plan_line(arm, scratch, via, opts);
        if (!seg.empty()) {
          scratch.q = seg.back();
          if (scratch.attached)
            scratch.layout.at(*scratch.attached).pose =
                geom::compose(sim::forward_kinematics(arm, scratch.q), scratch.attach_offset);
        }
        path.insert(path.end(), seg.begin(), seg.end());
      }
      return path;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::PlanFailure) throw;
      last = e;
    }
  }
  throw *last;
}

std::string_view event_name(Event e) {
  switch (e) {
    case Event::approach: return "approach";
    case Event::bottleneck_reached: return "bottleneck_reached";
    case Event::perturbation: return "perturbation";
    case Event::recovery: return "recovery";
    case Event::interaction: return "interaction";
    case Event::done: return "done";
    case Event::failure: return "failure";
  }
  return "?";
}

Event parse_event(std::string_view s) {
  for (Event e : {Event::approach, Event::bottleneck_reached, Event::perturbation, Event::recovery,
                  Event::interaction, Event::done, Event::failure})
    if (event_name(e) == s) return e;
  raise(ErrorKind::ParseError, "unknown event '" + std::string(s) + "'");
}

ObsRecord record_observation(const sim::Observation& o) {
  ObsRecord r;
  r.q = o.q;
  r.gripper = o.gripper;
  r.tcp = o.tcp;
  r.target_id = o.target_id;
  r.target_pose = o.target_pose;
  r.wrist_camera = o.wrist_camera;
  return r;
}

bool placed_in(const scene::SceneLayout& layout, const std::string& object, const std::string& receptacle) {
  const auto& o = layout.at(object);
  const auto& r = layout.at(receptacle);
  const geom::Aabb fp = r.support_footprint();
  const Vec3 c = o.pose.translation();
  const bool inside = c.x() >= fp.min.x() && c.x() <= fp.max.x() && c.y() >= fp.min.y() && c.y() <= fp.max.y();
  return inside && std::abs(o.aabb().min.z() - r.support_height()) < 1e-6;
}

namespace {

// Steps `path`, appending one record per action. Stops after the first step
// whose result satisfies `stop` and returns true then.
template <class Stop>
bool run_path(const sim::ArmModel& arm, sim::WorldState& w, const std::vector<JointVec>& path, int subtask,
              Event tag, const std::string& target, std::vector<StepRecord>& out, Stop stop) {
  for (const JointVec& q : path) {
    StepRecord r;
    r.subtask = subtask;
    r.event = tag;
    r.action = sim::Action::joints(q - w.q);
    r.obs = record_observation(sim::observe(arm, w, target));
    out.push_back(r);
    sim::step_inplace(arm, w, r.action);
    if (stop()) return true;
  }
  return false;
}

void run_gripper(const sim::ArmModel& arm, sim::WorldState& w, double opening, int subtask, Event tag,
                 const std::string& target, std::vector<StepRecord>& out) {
  StepRecord r;
  r.subtask = subtask;
  r.event = tag;
  r.action = sim::Action::gripper(opening);
  r.obs = record_observation(sim::observe(arm, w, target));
  out.push_back(r);
  sim::step_inplace(arm, w, r.action);
}

}  // namespace

std::vector<StepRecord> execute_interaction(const sim::ArmModel& arm, sim::WorldState& w, const SubtaskSpec& spec,
                                            int subtask_index, const PlanOptions& opts) {
  if (!tcp_in_hemisphere(arm, w, spec))
    raise(ErrorKind::ContractError, "interaction requires the TCP inside the bottleneck hemisphere");
  std::vector<StepRecord> out;
  const auto never = [] { return false; };
  const RigidPose contact = contact_pose(w.layout, spec);
  const Vec3 up = spec.hemisphere.radius * world_axis(w.layout, spec);
  run_path(arm, w, line_path(arm, w, contact, opts, true), subtask_index, Event::interaction, spec.target, out, never);
  if (spec.kind == SubtaskKind::grasp) {
    run_gripper(arm, w, 0.0, subtask_index, Event::interaction, spec.target, out);
    if (!w.attached || *w.attached != spec.target)
      raise(ErrorKind::GraspFailure, "gripper closed without holding " + spec.target);
    run_path(arm, w, line_path(arm, w, shifted(contact, up), opts, true), subtask_index, Event::interaction, spec.target,
             out, never);
  } else {
    const std::string held = w.attached.value_or("");
    run_gripper(arm, w, spec.opening, subtask_index, Event::interaction, spec.target, out);
    if (w.attached) raise(ErrorKind::GraspFailure, "release did not open past the held object");
    run_path(arm, w, line_path(arm, w, shifted(contact, up), opts, true), subtask_index, Event::interaction, spec.target,
             out, never);
    if (held.empty() || !placed_in(w.layout, held, spec.target))
      raise(ErrorKind::GraspFailure, "object not resting in " + spec.target);
  }
  return out;
}

std::vector<SubtaskSpec> resolve_subtasks(const TaskDef& task, Rng& rng) {
  std::vector<SubtaskSpec> out = task.subtasks;
  for (auto& s : out) {
    if (s.placement) {
      const auto& p = *s.placement;
      s.hemisphere.center = Vec3(rng.uniform(p.min.x(), p.max.x()), rng.uniform(p.min.y(), p.max.y()),
                                 rng.uniform(p.min.z(), p.max.z()));
    }
    s.validate();
  }
  return out;
}

std::vector<SubtaskSpec> episode_subtasks(const TaskDef& task, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5b7a));
  return resolve_subtasks(task, rng);
}

EpisodeRecord generate_episode(const sim::ArmModel& arm, const TaskDef& task, std::uint64_t seed,
                               const AdversarialConfig& adv, const GenOptions& opts) {
  if (task.subtasks.empty()) raise(ErrorKind::InvalidArgument, "task has no subtasks");
  if (adv.enabled) adv.validate();
  EpisodeRecord ep;
  ep.seed = seed;
  ep.task = task.name;
  ep.preset = opts.preset;
  ep.domain = opts.domain;
  ep.arm_hash = arm.hash();
  const auto subtasks = episode_subtasks(task, seed);
  Rng rng(mix_seed(seed, 0xe915));
  try {
    ep.layout = scene::generate_layout(task.scene, seed);
  } catch (const Error& e) {
    ep.failure_reason = std::string(error_kind_name(e.kind())) + ": " + e.what();
    return ep;
  }
  sim::WorldState w = sim::make_world(arm, ep.layout, seed);
  int subtask = 0;
  std::string target = subtasks.front().target;
  Event last_tag = Event::approach;
  try {
    for (subtask = 0; subtask < static_cast<int>(subtasks.size()); ++subtask) {
      const SubtaskSpec& spec = subtasks[subtask];
      target = spec.target;
      if (spec.kind == SubtaskKind::grasp && !w.attached && w.gripper != spec.opening)
        run_gripper(arm, w, spec.opening, subtask, Event::approach, target, ep.steps);
      Event tag = Event::approach;
      for (;;) {
        last_tag = tag;
        const RigidPose bn = compute_bottleneck_pose(w.layout, spec);
        const Vec3 axis = world_axis(w.layout, spec);
        const RigidPose hover = shifted(bn, (spec.standoff - spec.hemisphere.radius) * axis);
        auto path = plan_approach(arm, w, hover, opts.plan);
        sim::WorldState probe = w;
        if (!path.empty()) {
          probe.q = path.back();
          if (probe.attached)
            probe.layout.at(*probe.attached).pose =
                geom::compose(sim::forward_kinematics(arm, probe.q), probe.attach_offset);
        }
        const auto descend = plan_line(arm, probe, shifted(bn, -kArrivalInset * axis), opts.plan);
        path.insert(path.end(), descend.begin(), descend.end());
        const bool arrived =
            run_path(arm, w, path, subtask, tag, target, ep.steps, [&] { return tcp_in_hemisphere(arm, w, spec); });
        if (!arrived) raise(ErrorKind::PlanFailure, "approach ended outside the hemisphere");
        ep.steps.back().event = Event::bottleneck_reached;
        ++ep.bottleneck_arrivals;
        const bool fire = adv.enabled && static_cast<int>(ep.interventions.size()) < adv.max_interventions &&
                          rng.bernoulli(adv.probability);
        if (!fire) break;
        // Perturbation at the bottleneck, then recovery.
        InterventionRecord iv;
        iv.subtask = subtask;
        iv.object = target;
        iv.requested = sample_perturbation(adv, rng);
        const RigidPose before = w.layout.at(target).pose;
        StepRecord pr;
        pr.subtask = subtask;
        pr.event = Event::perturbation;
        pr.action = sim::Action::joints(JointVec::Zero());
        pr.obs = record_observation(sim::observe(arm, w, target));
        iv.step = ep.steps.size();
        last_tag = Event::perturbation;
        // Logged before the attempt: an infeasible intervention still counts, with a zero applied delta.
        ep.steps.push_back(pr);
        ep.interventions.push_back(iv);
        sim::perturb_object(arm, w, target, iv.requested.delta, iv.requested.yaw, adv.bounds());
        const RigidPose after = w.layout.at(target).pose;
        ep.interventions.back().applied.delta = (after.translation() - before.translation()).head<2>();
        ep.interventions.back().applied.yaw = wrap_angle(after.yaw() - before.yaw());
        sim::step_inplace(arm, w, pr.action);
        tag = Event::recovery;
        last_tag = tag;
        const RigidPose tcp = sim::forward_kinematics(arm, w.q);
        run_path(arm, w, plan_line(arm, w, shifted(tcp, opts.retract_factor * spec.hemisphere.radius * axis), opts.plan),
                 subtask, tag, target, ep.steps, [] { return false; });
      }
      last_tag = Event::interaction;
      auto recs = execute_interaction(arm, w, spec, subtask, opts.plan);
      ep.steps.insert(ep.steps.end(), recs.begin(), recs.end());
    }
    if (!ep.steps.empty()) ep.steps.back().event = Event::done;
    ep.success = true;
  } catch (const Error& e) {
    StepRecord f;
    f.subtask = std::min(subtask, static_cast<int>(subtasks.size()) - 1);
    f.event = Event::failure;
    f.obs = record_observation(sim::observe(arm, w, target));
    ep.steps.push_back(f);
    ep.failure_reason = std::string(error_kind_name(e.kind())) + " in subtask " + std::to_string(subtask) + " during " + std::string(event_name(last_tag)) + ": " + e.what();
  }

  if (opts.render && !opts.image_root.empty()) {
    // Replays the recorded actions to render every render_every-th observation.
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(opts.image_root) / "images");
    sim::ArmModel cam_arm = arm;
    for (splat::Camera* c : {&cam_arm.head_camera, &cam_arm.wrist_camera}) {
      c->fx *= opts.camera_scale;
      c->fy *= opts.camera_scale;
    }
    static const std::vector<splat::GaussianPrimitive> background = sim::procedural_background(0);
    sim::ObserveOptions oo;
    oo.render = true;
    oo.mode = opts.mode;
    oo.background = &background;
    oo.plain_background = opts.plain_background;
    sim::WorldState rw = sim::make_world(arm, ep.layout, seed);
    std::size_t next_iv = 0;
    const int every = std::max(1, opts.render_every);
    char name[64];
    for (std::size_t i = 0; i < ep.steps.size(); ++i) {
      auto& s = ep.steps[i];
      if (i % every == 0) {
        const sim::Observation ob = sim::observe(cam_arm, rw, s.obs.target_id, oo);
        std::snprintf(name, sizeof name, "images/ep%06llu_s%05zu", static_cast<unsigned long long>(seed), i);
        s.obs.head_image = std::string(name) + "_head.ppm";
        s.obs.wrist_image = std::string(name) + "_wrist.ppm";
        splat::write_ppm((fs::path(opts.image_root) / s.obs.head_image).string(), ob.head->color);
        splat::write_ppm((fs::path(opts.image_root) / s.obs.wrist_image).string(), ob.wrist->color);
      }
      if (s.event == Event::failure) break;
      if (next_iv < ep.interventions.size() && ep.interventions[next_iv].step == i) {
        const auto& iv = ep.interventions[next_iv++];
        auto& o = rw.layout.at(iv.object);
        o.pose = RigidPose(o.pose.translation() + Vec3(iv.applied.delta.x(), iv.applied.delta.y(), 0),
                           geom::Quat(Eigen::AngleAxisd(iv.applied.yaw, Vec3::UnitZ())) * o.pose.rotation());
      }
      sim::step_inplace(arm, rw, s.action);
    }
  }
  return ep;
}

std::vector<EpisodeRecord> generate_batch(const sim::ArmModel& arm, const TaskDef& task, std::size_t n,
                                          const AdversarialConfig& adv, std::uint64_t base_seed,
                                          const GenOptions& opts, unsigned jobs, bool success_only) {
  if (n < 1) raise(ErrorKind::InvalidArgument, "batch needs n >= 1");
  std::vector<EpisodeRecord> out(n);
  parallel_for(n, jobs, [&](std::size_t i) { out[i] = generate_episode(arm, task, base_seed + i, adv, opts); });
  if (success_only)
    out.erase(std::remove_if(out.begin(), out.end(), [](const EpisodeRecord& e) { return !e.success; }), out.end());
  return out;
}

std::string episode_to_string(const EpisodeRecord& e) {
  std::ostringstream s;
  s << "episode 1\n";
  s << "seed " << e.seed << '\n';
  s << "task " << e.task << '\n';
  s << "preset " << e.preset << '\n';
  s << "domain " << e.domain << '\n';
  s << "arm " << hex64(e.arm_hash) << '\n';
  s << "outcome " << (e.success ? "success" : "failure");
  if (!e.success) s << ' ' << (e.failure_reason.empty() ? "unknown" : e.failure_reason);
  s << '\n';
  s << "arrivals " << e.bottleneck_arrivals << '\n';
  const std::string layout = scene::layout_to_string(e.layout);
  s << "layout " << std::count(layout.begin(), layout.end(), '\n') << '\n' << layout;
  s << "interventions " << e.interventions.size() << '\n';
  for (const auto& iv : e.interventions)
    s << iv.subtask << ' ' << iv.step << ' ' << iv.object << ' ' << fmt_double(iv.requested.delta.x()) << ' '
      << fmt_double(iv.requested.delta.y()) << ' ' << fmt_double(iv.requested.yaw) << ' '
      << fmt_double(iv.applied.delta.x()) << ' ' << fmt_double(iv.applied.delta.y()) << ' '
      << fmt_double(iv.applied.yaw) << '\n';
  s << "steps " << e.steps.size() << '\n';
  // subtask event kind a0..a6 | q0..q5 gripper tcp7 target target7 wrist7 head wrist
  for (const auto& r : e.steps) {
    s << r.subtask << ' ' << event_name(r.event) << ' ' << (r.action.kind == sim::Action::Kind::joint_delta ? 'j' : 'g');
    for (int i = 0; i < 6; ++i) s << ' ' << fmt_double(r.action.delta[i]);
    s << ' ' << fmt_double(r.action.opening);
    for (int i = 0; i < 6; ++i) s << ' ' << fmt_double(r.obs.q[i]);
    s << ' ' << fmt_double(r.obs.gripper) << pose_tokens(r.obs.tcp) << ' ' << r.obs.target_id
      << pose_tokens(r.obs.target_pose) << pose_tokens(r.obs.wrist_camera) << ' ' << r.obs.head_image << ' '
      << r.obs.wrist_image << '\n';
  }
  return s.str();
}

namespace {

struct LineReader {
  std::istringstream in;
  std::string source;
  int line_no = 0;

  LineReader(const std::string& text, std::string src) : in(text), source(std::move(src)) {}

  [[noreturn]] void fail(const std::string& what) const {
    raise(ErrorKind::ParseError, source + ":" + std::to_string(line_no) + ": " + what);
  }
  std::string line() {
    std::string l;
    if (!std::getline(in, l)) {
      ++line_no;
      fail("unexpected end of file");
    }
    ++line_no;
    return l;
  }
  std::vector<std::string> keyed(const std::string& key, std::size_t min_tokens = 2) {
    auto t = split_ws(line());
    if (t.size() < min_tokens || t[0] != key) fail("expected '" + key + "'");
    return t;
  }
  double num(const std::string& tok) {
    try {
      return parse_double(tok, "value");
    } catch (const Error&) {
      fail("bad number '" + tok + "'");
    }
  }
  long long integer(const std::string& tok) {
    try {
      return parse_int(tok, "value");
    } catch (const Error&) {
      fail("bad integer '" + tok + "'");
    }
  }
  RigidPose pose(const std::vector<std::string>& t, std::size_t at) {
    std::array<double, 7> v{};
    for (int i = 0; i < 7; ++i) v[i] = num(t[at + i]);
    return RigidPose::from_array(v);
  }
};

}  // namespace

EpisodeRecord parse_episode(const std::string& text, const std::string& source) {
  LineReader r(text, source);
  EpisodeRecord e;
  if (r.keyed("episode")[1] != "1") r.fail("unsupported episode version");
  e.seed = static_cast<std::uint64_t>(r.integer(r.keyed("seed")[1]));
  e.task = r.keyed("task")[1];
  e.preset = r.keyed("preset")[1];
  e.domain = r.keyed("domain")[1];
  {
    const std::string h = r.keyed("arm")[1];
    try {
      std::size_t used = 0;
      e.arm_hash = std::stoull(h, &used, 16);
      if (used != h.size()) r.fail("bad arm hash");
    } catch (const std::logic_error&) {
      r.fail("bad arm hash");
    }
  }
  {
    const auto t = r.keyed("outcome");
    if (t[1] == "success") {
      e.success = true;
    } else if (t[1] == "failure") {
      for (std::size_t i = 2; i < t.size(); ++i) e.failure_reason += (i > 2 ? " " : "") + t[i];
    } else {
      r.fail("bad outcome");
    }
  }
  e.bottleneck_arrivals = static_cast<int>(r.integer(r.keyed("arrivals")[1]));
  {
    const long long n = r.integer(r.keyed("layout")[1]);
    std::string lt;
    for (long long i = 0; i < n; ++i) lt += r.line() + "\n";
    try {
      e.layout = scene::parse_layout(lt);
    } catch (const Error& err) {
      r.fail(std::string("layout: ") + err.what());
    }
  }
  const long long ni = r.integer(r.keyed("interventions")[1]);
  for (long long i = 0; i < ni; ++i) {
    const auto t = split_ws(r.line());
    if (t.size() != 9) r.fail("intervention needs 9 fields");
    InterventionRecord iv;
    iv.subtask = static_cast<int>(r.integer(t[0]));
    iv.step = static_cast<std::size_t>(r.integer(t[1]));
    iv.object = t[2];
    iv.requested.delta = Vec2(r.num(t[3]), r.num(t[4]));
    iv.requested.yaw = r.num(t[5]);
    iv.applied.delta = Vec2(r.num(t[6]), r.num(t[7]));
    iv.applied.yaw = r.num(t[8]);
    e.interventions.push_back(iv);
  }
  const long long ns = r.integer(r.keyed("steps")[1]);
  for (long long i = 0; i < ns; ++i) {
    const auto t = split_ws(r.line());
    if (t.size() != 41) r.fail("step needs 41 fields");
    StepRecord s;
    s.subtask = static_cast<int>(r.integer(t[0]));
    try {
      s.event = parse_event(t[1]);
    } catch (const Error&) {
      r.fail("unknown event '" + t[1] + "'");
    }
    if (t[2] != "j" && t[2] != "g") r.fail("bad action kind");
    s.action.kind = t[2] == "j" ? sim::Action::Kind::joint_delta : sim::Action::Kind::gripper_set;
    for (int k = 0; k < 6; ++k) s.action.delta[k] = r.num(t[3 + k]);
    s.action.opening = r.num(t[9]);
    for (int k = 0; k < 6; ++k) s.obs.q[k] = r.num(t[10 + k]);
    s.obs.gripper = r.num(t[16]);
    s.obs.tcp = r.pose(t, 17);
    s.obs.target_id = t[24];
    s.obs.target_pose = r.pose(t, 25);
    s.obs.wrist_camera = r.pose(t, 32);
    s.obs.head_image = t[39];
    s.obs.wrist_image = t[40];
    e.steps.push_back(s);
  }
  return e;
}

}  // namespace s2r::traj
