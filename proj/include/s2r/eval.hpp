#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2r/dataset.hpp"
#include "s2r/sim.hpp"
#include "s2r/traj.hpp"

namespace s2r::eval {

using geom::RigidPose;
using geom::Vec2;
using geom::Vec3;
using sim::JointVec;

/// One evaluation episode: a generated layout with the target placed at a
/// recorded pose.
struct TrialSpec {
  std::uint64_t seed = 0;
  double x = 0, y = 0, yaw = 0;  // target pose on its support, yaw in rad
  int distractors = 0;
  int max_attempts = 3;

  void validate() const;
};

/// Lines of "seed x y yaw_deg distractors", `#` comments.
std::vector<TrialSpec> parse_trials(const std::string& text, const std::string& source = "trials");
std::string trials_to_string(const std::vector<TrialSpec>& trials);
std::vector<TrialSpec> load_trials(const std::string& path);

/// Seeds from base_seed upward whose unperturbed generated demonstration succeeds.
std::vector<TrialSpec> make_trial_set(const sim::ArmModel& arm, const traj::TaskDef& task, std::size_t count = 20,
                                      std::uint64_t base_seed = 1000);

/// Layout of a trial. Throws InvalidArgument when the recorded pose no longer fits.
scene::SceneLayout trial_layout(const traj::TaskDef& task, const TrialSpec& trial);

/// Maps observations to actions. Internal state resets per attempt.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void reset(const TrialSpec& trial, int attempt) = 0;
  virtual sim::Action act(const sim::Observation& obs) = 0;
  /// Independent copy for a parallel trial.
  virtual std::unique_ptr<Policy> clone() const = 0;
};

/// Always a zero joint delta.
class ZeroPolicy : public Policy {
 public:
  std::string name() const override { return "zero"; }
  void reset(const TrialSpec&, int) override {}
  sim::Action act(const sim::Observation&) override { return sim::Action::joints(JointVec::Zero()); }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ZeroPolicy>(); }
};

/// Planner with privileged state; replans whenever the target moves.
class OraclePolicy : public Policy {
 public:
  OraclePolicy(const sim::ArmModel& arm, traj::TaskDef task, traj::GenOptions opts = {});
  std::string name() const override { return "oracle"; }
  void reset(const TrialSpec& trial, int attempt) override;
  sim::Action act(const sim::Observation& obs) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<OraclePolicy>(*this); }

 private:
  void replan(const sim::WorldState& w, const std::string& target);

  const sim::ArmModel* arm_;
  traj::TaskDef task_;
  traj::GenOptions opts_;
  std::vector<traj::SubtaskSpec> subtasks_;
  std::deque<sim::Action> queue_;
  std::string planned_id_;
  std::optional<RigidPose> planned_pose_;
};

/// Replays a recorded demonstration open-loop, then idles.
class FrozenReplayPolicy : public Policy {
 public:
  /// Demonstrations keyed by trial seed.
  explicit FrozenReplayPolicy(std::map<std::uint64_t, std::vector<sim::Action>> demos);
  static FrozenReplayPolicy from_episodes(const std::vector<traj::EpisodeRecord>& episodes);
  std::string name() const override { return "frozen_replay"; }
  void reset(const TrialSpec& trial, int attempt) override;
  sim::Action act(const sim::Observation& obs) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<FrozenReplayPolicy>(*this); }

 private:
  std::map<std::uint64_t, std::vector<sim::Action>> demos_;
  const std::vector<sim::Action>* current_ = nullptr;
  std::size_t next_ = 0;
};

/// Neighbour count of the default surrogate. Averaging several demos blends
/// incompatible grasp approaches, so the nearest one wins.
inline constexpr int kDefaultNeighbours = 1;

constexpr int kFeatureDim = 10;
using Feature = Eigen::Matrix<double, kFeatureDim, 1>;

/// Joints (x0.5), gripper (x10), target y/z in the tool frame (x10), and target yaw
/// relative to the stroke axis folded to [-pi/2, pi/2) (x0.5).
Feature policy_feature(const sim::JointVec& q, double gripper, const RigidPose& tcp, const RigidPose& target);
Feature policy_feature(const sim::Observation& obs);
Feature policy_feature(const traj::ObsRecord& obs);

/// Exact k nearest neighbours in L2, ties broken by insertion index.
class KdTree {
 public:
  explicit KdTree(std::vector<Feature> points);
  std::vector<std::size_t> nearest(const Feature& q, std::size_t k) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;
    double split = 0;
    std::size_t begin = 0, end = 0;  // leaf range in order_
    int left = -1, right = -1;
  };
  int build(std::size_t begin, std::size_t end, int depth);

  std::vector<Feature> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

struct TrainingSample {
  Feature feature;
  sim::Action action;
};

/// Usable steps of successful episodes (perturbation and failure records excluded).
std::vector<TrainingSample> training_samples(const dataset::Dataset& d);
/// Co-training mixture drawn from the stream; draws of unusable steps are skipped.
std::vector<TrainingSample> cotrain_samples(const dataset::CotrainSpec& spec, std::size_t draws);

/// k-NN behaviour cloning: majority action kind among the k nearest, mean payload of that kind.
class KnnPolicy : public Policy {
 public:
  /// Throws EmptyDataset, InvalidArgument (k < 1).
  KnnPolicy(std::vector<TrainingSample> samples, int k, std::string label = "knn");
  std::string name() const override { return label_; }
  void reset(const TrialSpec&, int) override {}
  sim::Action act(const sim::Observation& obs) override;
  sim::Action predict(const Feature& f) const;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<KnnPolicy>(*this); }

 private:
  std::shared_ptr<const std::vector<TrainingSample>> samples_;
  std::shared_ptr<const KdTree> tree_;
  int k_ = 1;
  std::string label_;
};

struct AttemptLog {
  bool reached_bottleneck = false;
  bool completed = false;
  std::string failure;
  std::size_t steps = 0;
  /// First step (0-based) whose result was inside the grasp hemisphere.
  std::optional<std::size_t> arrival_step;
};

struct TrialLog {
  std::uint64_t seed = 0;
  std::vector<AttemptLog> attempts;
  std::size_t wall_steps = 0;

  bool completed() const;
  /// Throws InvalidArgument when attempts exceed 3 or completion lacks an arrival.
  void validate() const;
};

/// One scheduled displacement of the target during attempt 1.
struct PerturbEvent {
  std::size_t step = 0;
  Vec2 delta = Vec2::Zero();
  double yaw = 0.0;
};

struct TrialOptions {
  std::size_t max_steps = 600;  // per attempt
  sim::PerturbBounds bounds;
};

TrialLog run_trial(Policy& policy, const sim::ArmModel& arm, const traj::TaskDef& task, const TrialSpec& trial,
                   const TrialOptions& opts = {}, const std::optional<PerturbEvent>& perturb = std::nullopt);

/// Trials in parallel; logs in trial order for any `jobs`.
std::vector<TrialLog> run_trials(const Policy& policy, const sim::ArmModel& arm, const traj::TaskDef& task,
                                 const std::vector<TrialSpec>& trials, const TrialOptions& opts = {},
                                 unsigned jobs = 1);
/// `schedule[i]` fires in attempt 1 of trial i. Throws InvalidArgument on a size mismatch.
std::vector<TrialLog> run_perturbed_trials(const Policy& policy, const sim::ArmModel& arm, const traj::TaskDef& task,
                                           const std::vector<TrialSpec>& trials,
                                           const std::vector<PerturbEvent>& schedule, const TrialOptions& opts = {},
                                           unsigned jobs = 1);

/// Seeded deltas, each firing `lead` steps before the oracle's first arrival.
std::vector<PerturbEvent> make_perturb_schedule(const sim::ArmModel& arm, const traj::TaskDef& task,
                                                const std::vector<TrialSpec>& trials,
                                                const traj::AdversarialConfig& adv, std::uint64_t seed,
                                                std::size_t lead = 10);

/// Percentages.
struct EvalReport {
  double tar = 0, sr1 = 0, sr3 = 0;
  std::size_t trials = 0;
};

/// Throws EmptyLogs.
EvalReport compute_metrics(const std::vector<TrialLog>& logs);

struct ReportRow {
  std::string dataset, policy;
  EvalReport report;
};

/// Columns dataset,policy,TAR,SR1,SR3; the perturbed layout drops SR3.
std::string report_csv(const std::vector<ReportRow>& rows, bool perturbed = false);

}  // namespace s2r::eval
