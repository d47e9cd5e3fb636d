#include "s2r/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <sstream>

namespace s2r::eval {

void TrialSpec::validate() const {
  if (max_attempts != 3) raise(ErrorKind::InvalidArgument, "trials allow exactly 3 attempts");
  if (distractors < 0) raise(ErrorKind::InvalidArgument, "distractor count must be >= 0");
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(yaw))
    raise(ErrorKind::InvalidArgument, "trial pose must be finite");
}

std::vector<TrialSpec> parse_trials(const std::string& text, const std::string& source) {
  std::vector<TrialSpec> out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto t = split_ws(line);
    if (t.empty()) continue;
    const std::string ctx = source + ":" + std::to_string(no);
    if (t.size() != 5) raise(ErrorKind::ParseError, ctx + ": expected 'seed x y yaw_deg distractors'");
    TrialSpec s;
    s.seed = static_cast<std::uint64_t>(parse_int(t[0], ctx));
    s.x = parse_double(t[1], ctx);
    s.y = parse_double(t[2], ctx);
    s.yaw = deg2rad(parse_double(t[3], ctx));
    s.distractors = static_cast<int>(parse_int(t[4], ctx));
    try {
      s.validate();
    } catch (const Error& e) {
      raise(ErrorKind::ParseError, ctx + ": " + e.what());
    }
    out.push_back(s);
  }
  return out;
}

std::string trials_to_string(const std::vector<TrialSpec>& trials) {
  std::ostringstream s;
  s << "# seed x y yaw_deg distractors\n";
  for (const auto& t : trials)
    s << t.seed << ' ' << fmt_double(t.x) << ' ' << fmt_double(t.y) << ' ' << fmt_double(rad2deg(t.yaw)) << ' '
      << t.distractors << '\n';
  return s.str();
}

std::vector<TrialSpec> load_trials(const std::string& path) { return parse_trials(read_text_file(path), path); }

namespace {

int count_distractors(const scene::SceneLayout& l) {
  return static_cast<int>(std::count_if(l.objects.begin(), l.objects.end(),
                                        [](const auto& o) { return o.asset == scene::Asset::distractor; }));
}

const std::string& grasp_target(const traj::TaskDef& task) { return task.subtasks.front().target; }

}  // namespace

std::vector<TrialSpec> make_trial_set(const sim::ArmModel& arm, const traj::TaskDef& task, std::size_t count,
                                      std::uint64_t base_seed) {
  std::vector<TrialSpec> out;
  for (std::uint64_t seed = base_seed; out.size() < count; ++seed) {
    if (seed - base_seed > 100 * count + 100) raise(ErrorKind::Infeasible, "too few solvable trials");
    const auto e = traj::generate_episode(arm, task, seed, traj::AdversarialConfig{});
    if (!e.success) continue;
    const auto& p = e.layout.at(grasp_target(task)).pose;
    TrialSpec t;
    t.seed = seed;
    t.x = p.translation().x();
    t.y = p.translation().y();
    t.yaw = p.yaw();
    t.distractors = count_distractors(e.layout);
    out.push_back(t);
  }
  return out;
}

scene::SceneLayout trial_layout(const traj::TaskDef& task, const TrialSpec& trial) {
  trial.validate();
  scene::SceneLayout l = scene::generate_layout(task.scene, trial.seed);
  if (count_distractors(l) != trial.distractors)
    raise(ErrorKind::InvalidArgument, "trial " + std::to_string(trial.seed) + " expects " +
                                          std::to_string(trial.distractors) + " distractors");
  auto& o = l.at(grasp_target(task));
  const RigidPose want = RigidPose::from_yaw(trial.yaw, Vec3(trial.x, trial.y, o.pose.translation().z()));
  // Trial files carry rounded values; only a real edit replaces the generated pose.
  if (geom::translation_distance(want, o.pose) > 1e-7 || std::abs(wrap_angle(trial.yaw - o.pose.yaw())) > 1e-7) {
    o.pose = want;
    if (!scene::validate_layout(l).passed())
      raise(ErrorKind::InvalidArgument, "trial " + std::to_string(trial.seed) + ": target pose violates the layout");
  }
  return l;
}

// ---- oracle ----

OraclePolicy::OraclePolicy(const sim::ArmModel& arm, traj::TaskDef task, traj::GenOptions opts)
    : arm_(&arm), task_(std::move(task)), opts_(std::move(opts)) {}

void OraclePolicy::reset(const TrialSpec& trial, int) {
  subtasks_ = traj::episode_subtasks(task_, trial.seed);
  queue_.clear();
  planned_id_.clear();
  planned_pose_.reset();
}

void OraclePolicy::replan(const sim::WorldState& w, const std::string& target) {
  queue_.clear();
  planned_id_ = target;
  planned_pose_ = w.layout.at(target).pose;
  const auto it = std::find_if(subtasks_.begin(), subtasks_.end(), [&](const auto& s) { return s.target == target; });
  if (it == subtasks_.end()) return;
  const traj::SubtaskSpec& spec = *it;
  sim::WorldState scratch = w;
  auto push = [&](const sim::Action& a) {
    sim::step_inplace(*arm_, scratch, a);
    queue_.push_back(a);
  };
  try {
    if (spec.kind == traj::SubtaskKind::grasp && !scratch.attached && scratch.gripper != spec.opening)
      push(sim::Action::gripper(spec.opening));
    const Vec3 axis = scratch.layout.at(spec.target).pose.apply_vector(spec.approach_axis);
    const RigidPose bn = traj::compute_bottleneck_pose(scratch.layout, spec);
    const RigidPose hover(bn.translation() + (spec.standoff - spec.hemisphere.radius) * axis, bn.rotation());
    const RigidPose inset(bn.translation() - 0.002 * axis, bn.rotation());
    for (const auto& q : traj::plan_approach(*arm_, scratch, hover, opts_.plan)) push(sim::Action::joints(q - scratch.q));
    for (const auto& q : traj::plan_line(*arm_, scratch, inset, opts_.plan)) push(sim::Action::joints(q - scratch.q));
    for (const auto& r : traj::execute_interaction(*arm_, scratch, spec, 0, opts_.plan)) queue_.push_back(r.action);
  } catch (const Error&) {
    // Keep the feasible prefix; the trial times out if nothing better appears.
  }
}

sim::Action OraclePolicy::act(const sim::Observation& obs) {
  if (!obs.world) raise(ErrorKind::InvalidArgument, "oracle needs the privileged world state");
  // Exact comparison: any displacement of the world copy counts as a move.
  const bool moved = planned_id_ == obs.target_id && planned_pose_ &&
                     (planned_pose_->translation() != obs.target_pose.translation() ||
                      planned_pose_->rotation().coeffs() != obs.target_pose.rotation().coeffs());
  if (planned_id_ != obs.target_id && !queue_.empty()) {
    // The subtask switched mid-plan (grasp lift in progress): follow the new target from here on.
    planned_id_ = obs.target_id;
    planned_pose_ = obs.target_pose;
  } else if (moved || queue_.empty()) {
    replan(*obs.world, obs.target_id);
  }
  if (queue_.empty()) return sim::Action::joints(JointVec::Zero());
  const sim::Action a = queue_.front();
  queue_.pop_front();
  return a;
}

// ---- frozen replay ----

FrozenReplayPolicy::FrozenReplayPolicy(std::map<std::uint64_t, std::vector<sim::Action>> demos)
    : demos_(std::move(demos)) {}

FrozenReplayPolicy FrozenReplayPolicy::from_episodes(const std::vector<traj::EpisodeRecord>& episodes) {
  std::map<std::uint64_t, std::vector<sim::Action>> demos;
  for (const auto& e : episodes) {
    if (!e.success) continue;
    auto& d = demos[e.seed];
    d.clear();
    for (const auto& s : e.steps)
      if (s.event != traj::Event::perturbation && s.event != traj::Event::failure) d.push_back(s.action);
  }
  return FrozenReplayPolicy(std::move(demos));
}

void FrozenReplayPolicy::reset(const TrialSpec& trial, int) {
  const auto it = demos_.find(trial.seed);
  if (it == demos_.end())
    raise(ErrorKind::InvalidArgument, "no recorded demonstration for trial " + std::to_string(trial.seed));
  current_ = &it->second;
  next_ = 0;
}

sim::Action FrozenReplayPolicy::act(const sim::Observation&) {
  if (!current_ || next_ >= current_->size()) return sim::Action::joints(JointVec::Zero());
  return (*current_)[next_++];
}

// ---- features and k-NN ----

Feature policy_feature(const sim::JointVec& q, double gripper, const RigidPose& tcp, const RigidPose& target) {
  Feature f;
  // Joints weigh half so the target offset dominates once the arm is near it.
  f.head<6>() = 0.5 * q;
  f[6] = 10.0 * gripper;
  const Vec3 rel = tcp.inverse().apply(target.translation());
  f[7] = 10.0 * rel.y();
  f[8] = 10.0 * rel.z();
  // Target y axis seen from the tool, as a rotation about the approach axis.
  const Vec3 v = tcp.rotation().conjugate() * target.apply_vector(Vec3::UnitY());
  double a = std::atan2(v.z(), v.y());
  // The stroke is symmetric under a half turn.
  if (a >= kPi / 2) a -= kPi;
  if (a < -kPi / 2) a += kPi;
  f[9] = 0.5 * a;
  return f;
}

Feature policy_feature(const sim::Observation& obs) {
  return policy_feature(obs.q, obs.gripper, obs.tcp, obs.target_pose);
}

Feature policy_feature(const traj::ObsRecord& obs) {
  return policy_feature(obs.q, obs.gripper, obs.tcp, obs.target_pose);
}

namespace {
constexpr std::size_t kLeafSize = 12;
}

KdTree::KdTree(std::vector<Feature> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) build(0, points_.size(), 0);
}

int KdTree::build(std::size_t begin, std::size_t end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;
  Feature lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0) return id;  // all identical: stay a leaf
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int l = build(begin, mid, depth + 1);
  const int r = build(mid, end, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

std::vector<std::size_t> KdTree::nearest(const Feature& q, std::size_t k) const {
  using Entry = std::pair<double, std::size_t>;  // (squared distance, index); max-heap keeps the worst on top
  std::priority_queue<Entry> best;
  k = std::min(k, points_.size());
  if (k == 0) return {};
  auto visit = [&](auto&& self, int id) -> void {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t p = order_[i];
        const Entry e{(points_[p] - q).squaredNorm(), p};
        if (best.size() < k) {
          best.push(e);
        } else if (e < best.top()) {
          best.pop();
          best.push(e);
        }
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0 ? n.left : n.right, far = diff < 0 ? n.right : n.left;
    self(self, near);
    // Equal distance may still hold a lower index, so only strictly farther planes are pruned.
    if (best.size() < k || diff * diff <= best.top().first) self(self, far);
  };
  visit(visit, 0);
  std::vector<Entry> sorted;
  while (!best.empty()) {
    sorted.push_back(best.top());
    best.pop();
  }
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> out;
  for (const auto& e : sorted) out.push_back(e.second);
  return out;
}

namespace {

bool usable(const traj::EpisodeRecord& e, const traj::StepRecord& s) {
  return e.success && s.event != traj::Event::perturbation && s.event != traj::Event::failure;
}

}  // namespace

std::vector<TrainingSample> training_samples(const dataset::Dataset& d) {
  std::vector<TrainingSample> out;
  for (const auto& e : d.episodes)
    for (const auto& s : e.steps)
      if (usable(e, s)) out.push_back({policy_feature(s.obs), s.action});
  return out;
}

std::vector<TrainingSample> cotrain_samples(const dataset::CotrainSpec& spec, std::size_t draws) {
  dataset::CotrainStream stream(spec);
  std::vector<TrainingSample> out;
  out.reserve(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    const dataset::Draw d = stream.next();
    const auto& e = (d.from_sim ? spec.sim : spec.real)->episodes[d.episode];
    const auto& s = e.steps[d.step];
    if (usable(e, s)) out.push_back({policy_feature(s.obs), s.action});
  }
  return out;
}

KnnPolicy::KnnPolicy(std::vector<TrainingSample> samples, int k, std::string label) : k_(k), label_(std::move(label)) {
  if (samples.empty()) raise(ErrorKind::EmptyDataset, "k-NN policy needs at least one training step");
  if (k < 1) raise(ErrorKind::InvalidArgument, "k must be >= 1");
  std::vector<Feature> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.push_back(s.feature);
  samples_ = std::make_shared<const std::vector<TrainingSample>>(std::move(samples));
  tree_ = std::make_shared<const KdTree>(std::move(pts));
}

sim::Action KnnPolicy::predict(const Feature& f) const {
  const auto idx = tree_->nearest(f, static_cast<std::size_t>(k_));
  int joints = 0;
  for (const auto i : idx) joints += (*samples_)[i].action.kind == sim::Action::Kind::joint_delta ? 1 : 0;
  const int grips = static_cast<int>(idx.size()) - joints;
  // Majority kind; a tie follows the nearest neighbour.
  sim::Action::Kind kind = (*samples_)[idx.front()].action.kind;
  if (joints != grips) kind = joints > grips ? sim::Action::Kind::joint_delta : sim::Action::Kind::gripper_set;
  JointVec delta = JointVec::Zero();
  double opening = 0;
  int n = 0;
  for (const auto i : idx) {
    const auto& a = (*samples_)[i].action;
    if (a.kind != kind) continue;
    delta += a.delta;
    opening += a.opening;
    ++n;
  }
  return kind == sim::Action::Kind::joint_delta ? sim::Action::joints(delta / n) : sim::Action::gripper(opening / n);
}

sim::Action KnnPolicy::act(const sim::Observation& obs) { return predict(policy_feature(obs)); }

// ---- trials ----

bool TrialLog::completed() const {
  return std::any_of(attempts.begin(), attempts.end(), [](const AttemptLog& a) { return a.completed; });
}

void TrialLog::validate() const {
  if (attempts.size() > 3) raise(ErrorKind::InvalidArgument, "trial log has more than 3 attempts");
  if (completed() && std::none_of(attempts.begin(), attempts.end(), [](const AttemptLog& a) {
        return a.reached_bottleneck;
      }))
    raise(ErrorKind::InvalidArgument, "completed trial without a bottleneck arrival");
}

namespace {

struct Progress {
  const traj::TaskDef& task;

  const traj::SubtaskSpec* place() const {
    for (const auto& s : task.subtasks)
      if (s.kind == traj::SubtaskKind::place) return &s;
    return nullptr;
  }
  std::string target(const sim::WorldState& w) const {
    const auto* p = place();
    return (w.attached && p) ? p->target : grasp_target(task);
  }
  bool done(const sim::WorldState& w) const {
    const auto* p = place();
    if (!p) return w.attached && *w.attached == grasp_target(task);
    return !w.attached && traj::placed_in(w.layout, grasp_target(task), p->target);
  }
};

std::string describe(const Error& e) { return std::string(error_kind_name(e.kind())) + ": " + e.what(); }

}  // namespace

TrialLog run_trial(Policy& policy, const sim::ArmModel& arm, const traj::TaskDef& task, const TrialSpec& trial,
                   const TrialOptions& opts, const std::optional<PerturbEvent>& perturb) {
  TrialLog log;
  log.seed = trial.seed;
  sim::WorldState w = sim::make_world(arm, trial_layout(task, trial), trial.seed);
  const Progress progress{task};
  const traj::SubtaskSpec& grasp = task.subtasks.front();
  bool aborted = false;
  for (int attempt = 1; attempt <= trial.max_attempts && !aborted; ++attempt) {
    AttemptLog a;
    if (attempt > 1) {
      // Home reset; a held object drops where it is and the scene persists.
      if (w.attached) {
        try {
          sim::step_inplace(arm, w, sim::Action::gripper(arm.max_stroke));
        } catch (const Error&) {
          w.attached.reset();
        }
      }
      w.q = JointVec::Zero();
      w.gripper = arm.max_stroke;
      if (const auto hit = sim::find_collision(arm, w, w.q, w.gripper)) {
        a.failure = "home blocked by " + *hit;
        log.attempts.push_back(a);
        continue;
      }
    }
    policy.reset(trial, attempt);
    for (std::size_t step = 0; step < opts.max_steps; ++step) {
      if (perturb && attempt == 1 && step == perturb->step) {
        try {
          sim::perturb_object(arm, w, grasp_target(task), perturb->delta, perturb->yaw, opts.bounds);
        } catch (const Error& e) {
          a.failure = describe(e);
          aborted = true;
          break;
        }
      }
      const std::string target = progress.target(w);
      const sim::Observation obs = sim::observe(arm, w, target);
      try {
        sim::step_inplace(arm, w, policy.act(obs));
      } catch (const Error& e) {
        a.failure = describe(e);
        ++a.steps;
        break;
      }
      ++a.steps;
      if (!w.attached && !a.reached_bottleneck &&
          geom::in_bottleneck_hemisphere(sim::forward_kinematics(arm, w.q).translation(),
                                         w.layout.at(grasp.target).pose, grasp.hemisphere)) {
        a.reached_bottleneck = true;
        a.arrival_step = step;
      }
      if (progress.done(w)) {
        a.completed = true;
        break;
      }
    }
    if (!a.completed && a.failure.empty()) a.failure = "timeout";
    log.wall_steps += a.steps;
    log.attempts.push_back(a);
    if (a.completed) break;
  }
  return log;
}

std::vector<TrialLog> run_trials(const Policy& policy, const sim::ArmModel& arm, const traj::TaskDef& task,
                                 const std::vector<TrialSpec>& trials, const TrialOptions& opts, unsigned jobs) {
  std::vector<TrialLog> out(trials.size());
  parallel_for(trials.size(), jobs, [&](std::size_t i) {
    auto p = policy.clone();
    out[i] = run_trial(*p, arm, task, trials[i], opts);
  });
  return out;
}

std::vector<TrialLog> run_perturbed_trials(const Policy& policy, const sim::ArmModel& arm, const traj::TaskDef& task,
                                           const std::vector<TrialSpec>& trials,
                                           const std::vector<PerturbEvent>& schedule, const TrialOptions& opts,
                                           unsigned jobs) {
  if (schedule.size() != trials.size()) raise(ErrorKind::InvalidArgument, "one scheduled perturbation per trial");
  std::vector<TrialLog> out(trials.size());
  parallel_for(trials.size(), jobs, [&](std::size_t i) {
    auto p = policy.clone();
    const PerturbEvent& ev = schedule[i];
    // A zero event leaves the world untouched, so it is simply skipped.
    const bool zero = ev.delta.isZero(0) && ev.yaw == 0.0;
    out[i] = run_trial(*p, arm, task, trials[i], opts, zero ? std::nullopt : std::optional<PerturbEvent>(ev));
  });
  return out;
}

std::vector<PerturbEvent> make_perturb_schedule(const sim::ArmModel& arm, const traj::TaskDef& task,
                                                const std::vector<TrialSpec>& trials,
                                                const traj::AdversarialConfig& adv, std::uint64_t seed,
                                                std::size_t lead) {
  adv.validate();
  OraclePolicy oracle(arm, task);
  std::vector<PerturbEvent> out;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialLog log = run_trial(oracle, arm, task, trials[i]);
    const std::size_t arrival = log.attempts.front().arrival_step.value_or(lead);
    Rng rng(mix_seed(seed, i));
    const traj::Perturbation p = traj::sample_perturbation(adv, rng);
    out.push_back({arrival > lead ? arrival - lead : 0, p.delta, p.yaw});
  }
  return out;
}

EvalReport compute_metrics(const std::vector<TrialLog>& logs) {
  if (logs.empty()) raise(ErrorKind::EmptyLogs, "no trial logs");
  std::size_t tar = 0, sr1 = 0, sr3 = 0;
  for (const auto& l : logs) {
    l.validate();
    if (l.attempts.empty()) continue;
    tar += l.attempts.front().reached_bottleneck ? 1 : 0;
    sr1 += l.attempts.front().completed ? 1 : 0;
    sr3 += l.completed() ? 1 : 0;
  }
  const double n = static_cast<double>(logs.size());
  EvalReport r;
  r.trials = logs.size();
  r.tar = 100.0 * static_cast<double>(tar) / n;
  r.sr1 = 100.0 * static_cast<double>(sr1) / n;
  r.sr3 = 100.0 * static_cast<double>(sr3) / n;
  return r;
}

std::string report_csv(const std::vector<ReportRow>& rows, bool perturbed) {
  std::ostringstream s;
  s << (perturbed ? "dataset,policy,TAR,SR1\n" : "dataset,policy,TAR,SR1,SR3\n");
  for (const auto& r : rows) {
    s << r.dataset << ',' << r.policy << ',' << fmt_double(r.report.tar) << ',' << fmt_double(r.report.sr1);
    if (!perturbed) s << ',' << fmt_double(r.report.sr3);
    s << '\n';
  }
  return s.str();
}

}  // namespace s2r::eval
