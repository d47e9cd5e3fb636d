#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "s2r/eval.hpp"

using namespace s2r;
using namespace s2r::eval;

namespace {

const sim::ArmModel& arm() { return sim::default_arm(); }

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception";
  return ErrorKind::InvalidArgument;
}

AttemptLog attempt(bool reached, bool completed) {
  AttemptLog a;
  a.reached_bottleneck = reached;
  a.completed = completed;
  if (!completed) a.failure = "timeout";
  return a;
}

// `tar` trials reach on attempt 1, the first `sr1` of them also complete there,
// and later attempts complete the rest up to `sr3`.
std::vector<TrialLog> table_logs(int n, int tar, int sr1, int sr3) {
  std::vector<TrialLog> logs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& l = logs[static_cast<std::size_t>(i)];
    l.seed = static_cast<std::uint64_t>(i);
    const bool first_done = i < sr1;
    l.attempts.push_back(attempt(i < tar, first_done));
    if (first_done) continue;
    const bool later_done = i < sr1 + (sr3 - sr1);
    l.attempts.push_back(attempt(later_done, later_done));
    if (!later_done) l.attempts.push_back(attempt(false, false));
  }
  return logs;
}

const traj::TaskDef& sorting() {
  static const traj::TaskDef t = traj::sorting_task();
  return t;
}

const std::vector<TrialSpec>& trials() {
  static const std::vector<TrialSpec> t = make_trial_set(arm(), sorting(), 4, 1000);
  return t;
}

bool same_logs(const std::vector<TrialLog>& a, const std::vector<TrialLog>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].seed != b[i].seed || a[i].wall_steps != b[i].wall_steps || a[i].attempts.size() != b[i].attempts.size())
      return false;
    for (std::size_t j = 0; j < a[i].attempts.size(); ++j) {
      const auto &x = a[i].attempts[j], &y = b[i].attempts[j];
      if (x.reached_bottleneck != y.reached_bottleneck || x.completed != y.completed || x.failure != y.failure ||
          x.steps != y.steps || x.arrival_step != y.arrival_step)
        return false;
    }
  }
  return true;
}

// Follows the oracle until the TCP enters the grasp hemisphere, then drives straight down.
class ReachThenPlunge : public Policy {
 public:
  ReachThenPlunge() : oracle_(arm(), sorting()) {}
  std::string name() const override { return "plunge"; }
  void reset(const TrialSpec& t, int a) override {
    oracle_.reset(t, a);
    plunging_ = false;
  }
  sim::Action act(const sim::Observation& obs) override {
    const auto& g = sorting().subtasks.front();
    plunging_ = plunging_ || geom::in_bottleneck_hemisphere(obs.tcp.translation(), obs.target_pose, g.hemisphere);
    if (!plunging_) return oracle_.act(obs);
    const RigidPose down(obs.tcp.translation() - Vec3(0, 0, 0.01), obs.tcp.rotation());
    return sim::Action::joints(sim::inverse_kinematics(arm(), down, obs.q) - obs.q);
  }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ReachThenPlunge>(*this); }

 private:
  OraclePolicy oracle_;
  bool plunging_ = false;
};

dataset::Dataset episodes_of(const std::vector<TrialSpec>& ts) {
  std::vector<traj::EpisodeRecord> eps;
  for (const auto& t : ts) eps.push_back(traj::generate_episode(arm(), sorting(), t.seed, {}));
  return dataset::make_dataset(std::move(eps));
}

}  // namespace

TEST(Metrics, TableFormatExamples) {
  auto r = compute_metrics(table_logs(20, 16, 12, 19));
  EXPECT_DOUBLE_EQ(r.tar, 80.0);
  EXPECT_DOUBLE_EQ(r.sr1, 60.0);
  EXPECT_DOUBLE_EQ(r.sr3, 95.0);
  EXPECT_EQ(r.trials, 20u);
  r = compute_metrics(table_logs(20, 16, 12, 15));
  EXPECT_DOUBLE_EQ(r.tar, 80.0);
  EXPECT_DOUBLE_EQ(r.sr1, 60.0);
  EXPECT_DOUBLE_EQ(r.sr3, 75.0);
}

TEST(Metrics, AllRecoverOnSecondAttempt) {
  std::vector<TrialLog> logs(5);
  for (auto& l : logs) l.attempts = {attempt(true, false), attempt(true, true)};
  const auto r = compute_metrics(logs);
  EXPECT_DOUBLE_EQ(r.sr1, 0.0);
  EXPECT_DOUBLE_EQ(r.sr3, 100.0);
  EXPECT_DOUBLE_EQ(r.tar, 100.0);
}

TEST(Metrics, EmptyLogsAndInvalidLogs) {
  EXPECT_EQ(kind_of([] { compute_metrics({}); }), ErrorKind::EmptyLogs);
  TrialLog four;
  four.attempts.assign(4, attempt(false, false));
  EXPECT_EQ(kind_of([&] { four.validate(); }), ErrorKind::InvalidArgument);
  TrialLog unreached;
  unreached.attempts = {attempt(false, true)};
  EXPECT_EQ(kind_of([&] { unreached.validate(); }), ErrorKind::InvalidArgument);
}

TEST(Metrics, RandomLogsKeepRateOrdering) {
  Rng rng(11);
  for (int rep = 0; rep < 10000; ++rep) {
    std::vector<TrialLog> logs(1 + rng.below(25));
    for (auto& l : logs) {
      const int n = 1 + static_cast<int>(rng.below(3));
      for (int a = 0; a < n; ++a) {
        const bool reached = rng.bernoulli(0.6);
        // Completion needs an arrival in the same attempt.
        const bool done = reached && rng.bernoulli(0.5);
        l.attempts.push_back(attempt(reached, done));
        if (done) break;
      }
    }
    const auto r = compute_metrics(logs);
    ASSERT_GE(r.sr3, r.sr1);
    ASSERT_GE(r.tar, r.sr1);
    const auto again = compute_metrics(logs);
    ASSERT_EQ(again.tar, r.tar);
    ASSERT_EQ(again.sr3, r.sr3);
  }
}

TEST(Metrics, CsvLayouts) {
  std::vector<ReportRow> rows = {{"ADSim", "knn", compute_metrics(table_logs(20, 16, 12, 15))}};
  EXPECT_EQ(report_csv(rows), "dataset,policy,TAR,SR1,SR3\nADSim,knn,80,60,75\n");
  EXPECT_EQ(report_csv(rows, true), "dataset,policy,TAR,SR1\nADSim,knn,80,60\n");
}

TEST(TrialFile, RoundTripAndErrors) {
  const auto& ts = trials();
  ASSERT_EQ(ts.size(), 4u);
  const auto back = parse_trials(trials_to_string(ts));
  ASSERT_EQ(back.size(), ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_EQ(back[i].seed, ts[i].seed);
    EXPECT_NEAR(back[i].x, ts[i].x, 1e-12);
    EXPECT_NEAR(back[i].yaw, ts[i].yaw, 1e-12);
    EXPECT_EQ(back[i].distractors, ts[i].distractors);
    EXPECT_EQ(back[i].max_attempts, 3);
  }
  try {
    parse_trials("# header\n1 0 0 0 3\n2 0 0 3\n", "trials.txt");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("trials.txt:3"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { parse_trials("1 0 0 0 -1\n"); }), ErrorKind::ParseError);
}

TEST(TrialFile, LayoutFollowsTheRecordedPose) {
  TrialSpec t = trials().front();
  const auto base = trial_layout(sorting(), t);
  EXPECT_NEAR(base.at("plug").pose.translation().x(), t.x, 1e-12);
  t.x += 0.01;
  EXPECT_NEAR(trial_layout(sorting(), t).at("plug").pose.translation().x(), t.x, 1e-12);
  // Into the bin wall.
  t.x = 0.149;
  EXPECT_EQ(kind_of([&] { trial_layout(sorting(), t); }), ErrorKind::InvalidArgument);
  t = trials().front();
  t.distractors += 1;
  EXPECT_EQ(kind_of([&] { trial_layout(sorting(), t); }), ErrorKind::InvalidArgument);
}

TEST(RunTrial, OracleCompletesOnFirstAttempt) {
  OraclePolicy oracle(arm(), sorting());
  for (const auto& t : trials()) {
    const auto log = run_trial(oracle, arm(), sorting(), t);
    ASSERT_EQ(log.attempts.size(), 1u) << t.seed << " " << log.attempts.front().failure;
    EXPECT_TRUE(log.attempts[0].completed);
    EXPECT_TRUE(log.attempts[0].reached_bottleneck);
    EXPECT_TRUE(log.attempts[0].arrival_step.has_value());
  }
}

TEST(RunTrial, ZeroPolicyTimesOut) {
  ZeroPolicy zero;
  const auto log = run_trial(zero, arm(), sorting(), trials().front());
  ASSERT_EQ(log.attempts.size(), 3u);
  for (const auto& a : log.attempts) {
    EXPECT_EQ(a.failure, "timeout");
    EXPECT_EQ(a.steps, 600u);
    EXPECT_FALSE(a.reached_bottleneck);
  }
  EXPECT_EQ(log.wall_steps, 1800u);
  EXPECT_FALSE(log.completed());
}

TEST(RunTrial, ReachThenCollideCountsForAlignmentOnly) {
  ReachThenPlunge p;
  const auto log = run_trial(p, arm(), sorting(), trials().front());
  ASSERT_FALSE(log.attempts.empty());
  EXPECT_TRUE(log.attempts[0].reached_bottleneck);
  EXPECT_FALSE(log.attempts[0].completed);
  EXPECT_NE(log.attempts[0].failure.find("collision"), std::string::npos) << log.attempts[0].failure;
  const auto r = compute_metrics({log});
  EXPECT_DOUBLE_EQ(r.tar, 100.0);
  EXPECT_DOUBLE_EQ(r.sr1, 0.0);
}

TEST(Perturbed, ZeroScheduleReproducesPlainTrials) {
  OraclePolicy oracle(arm(), sorting());
  const std::vector<PerturbEvent> zeros(trials().size(), PerturbEvent{5, Vec2::Zero(), 0.0});
  EXPECT_TRUE(same_logs(run_perturbed_trials(oracle, arm(), sorting(), trials(), zeros),
                        run_trials(oracle, arm(), sorting(), trials())));
  EXPECT_EQ(kind_of([&] { run_perturbed_trials(oracle, arm(), sorting(), trials(), {}); }),
            ErrorKind::InvalidArgument);
}

TEST(Perturbed, ScheduleFiresBeforeTheOracleArrives) {
  traj::AdversarialConfig adv;
  adv.enabled = true;
  const auto a = make_perturb_schedule(arm(), sorting(), trials(), adv, 9);
  const auto b = make_perturb_schedule(arm(), sorting(), trials(), adv, 9);
  ASSERT_EQ(a.size(), trials().size());
  OraclePolicy oracle(arm(), sorting());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto log = run_trial(oracle, arm(), sorting(), trials()[i]);
    EXPECT_EQ(a[i].step + 10, *log.attempts[0].arrival_step);
    EXPECT_EQ(a[i].delta, b[i].delta);
    for (int c = 0; c < 2; ++c) {
      EXPECT_GE(std::abs(a[i].delta[c]), 0.02);
      EXPECT_LE(std::abs(a[i].delta[c]), 0.2);
    }
  }
}

TEST(Perturbed, OracleReplansAndFrozenReplayMisses) {
  const TrialSpec t = trials().front();
  OraclePolicy oracle(arm(), sorting());
  const std::size_t arrival = *run_trial(oracle, arm(), sorting(), t).attempts[0].arrival_step;
  const PerturbEvent ev{arrival - 10, Vec2(-0.06, 0.03), 0.6};

  const auto replanned = run_trial(oracle, arm(), sorting(), t, {}, ev);
  EXPECT_TRUE(replanned.attempts[0].completed) << replanned.attempts[0].failure;

  auto frozen = FrozenReplayPolicy::from_episodes(episodes_of({t}).episodes);
  const auto plain = run_trial(frozen, arm(), sorting(), t);
  EXPECT_TRUE(plain.attempts[0].completed) << plain.attempts[0].failure;
  const auto moved = run_trial(frozen, arm(), sorting(), t, {}, ev);
  EXPECT_FALSE(moved.attempts[0].reached_bottleneck);
  EXPECT_FALSE(moved.attempts[0].completed);
}

TEST(KdTree, MatchesBruteForceWithTies) {
  Rng rng(4);
  std::vector<Feature> pts;
  for (int i = 0; i < 1500; ++i) {
    Feature f;
    // Coarse grid values so that equal distances are common.
    for (int d = 0; d < kFeatureDim; ++d) f[d] = static_cast<double>(rng.below(4));
    pts.push_back(f);
  }
  pts.push_back(pts[7]);
  const KdTree tree(pts);
  for (int rep = 0; rep < 100; ++rep) {
    Feature q;
    for (int d = 0; d < kFeatureDim; ++d) q[d] = rng.uniform(-0.5, 3.5);
    if (rep % 10 == 0) q = pts[rng.below(pts.size())];
    for (std::size_t k : {1u, 5u, 17u}) {
      std::vector<std::pair<double, std::size_t>> all;
      for (std::size_t i = 0; i < pts.size(); ++i) all.push_back({(pts[i] - q).squaredNorm(), i});
      std::sort(all.begin(), all.end());
      const auto got = tree.nearest(q, k);
      ASSERT_EQ(got.size(), k);
      for (std::size_t j = 0; j < k; ++j) ASSERT_EQ(got[j], all[j].second);
    }
  }
  EXPECT_EQ(tree.nearest(pts[0], 5000).size(), pts.size());
}

TEST(Knn, ExactQueryWithKOneReturnsItsAction) {
  const auto samples = training_samples(episodes_of({trials()[0], trials()[1]}));
  ASSERT_FALSE(samples.empty());
  const KnnPolicy knn(samples, 1);
  for (std::size_t i = 0; i < samples.size(); i += 7) {
    // The earliest sample with this exact feature wins the tie.
    std::size_t first = i;
    for (std::size_t j = 0; j < i; ++j)
      if (samples[j].feature == samples[i].feature) {
        first = j;
        break;
      }
    const auto a = knn.predict(samples[i].feature);
    ASSERT_EQ(a.kind, samples[first].action.kind);
    ASSERT_EQ(a.delta, samples[first].action.delta);
    ASSERT_EQ(a.opening, samples[first].action.opening);
  }
}

TEST(Knn, OneEpisodeDatasetEmitsOnlyItsActions) {
  const auto samples = training_samples(episodes_of({trials()[2]}));
  const KnnPolicy knn(samples, 1);
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    Feature q;
    for (int d = 0; d < kFeatureDim; ++d) q[d] = rng.uniform(-2, 2);
    const auto a = knn.predict(q);
    const bool found = std::any_of(samples.begin(), samples.end(), [&](const TrainingSample& s) {
      return s.action.kind == a.kind && s.action.delta == a.delta && s.action.opening == a.opening;
    });
    ASSERT_TRUE(found);
  }
}

TEST(Knn, MajorityKindThenMeanPayload) {
  Feature z = Feature::Zero();
  Feature near = z, far = z;
  near[0] = 0.1;
  far[0] = 0.2;
  JointVec d = JointVec::Zero();
  d[0] = 0.04;
  const std::vector<TrainingSample> s = {
      {z, sim::Action::joints(d)}, {near, sim::Action::gripper(0.02)}, {far, sim::Action::gripper(0.04)}};
  const auto a = KnnPolicy(s, 3).predict(z);
  EXPECT_EQ(a.kind, sim::Action::Kind::gripper_set);
  EXPECT_DOUBLE_EQ(a.opening, 0.03);
  // Tie in kind: the nearest neighbour decides.
  const auto b = KnnPolicy(s, 2).predict(z);
  EXPECT_EQ(b.kind, sim::Action::Kind::joint_delta);
  EXPECT_DOUBLE_EQ(b.delta[0], 0.04);
}

TEST(Knn, EmptyAndInvalid) {
  EXPECT_EQ(kind_of([] { KnnPolicy({}, 1); }), ErrorKind::EmptyDataset);
  auto d = episodes_of({trials()[0]});
  d.episodes[0].success = false;
  EXPECT_EQ(kind_of([&] { KnnPolicy(training_samples(d), 3); }), ErrorKind::EmptyDataset);
  const std::vector<TrainingSample> one = {{Feature::Zero(), sim::Action::gripper(0.01)}};
  EXPECT_EQ(kind_of([&] { KnnPolicy(one, 0); }), ErrorKind::InvalidArgument);
}

TEST(Knn, FeatureIgnoresHalfTurnsOfTheTarget) {
  const RigidPose tcp = sim::forward_kinematics(arm(), JointVec::Zero());
  const RigidPose a = RigidPose::from_yaw(0.3, Vec3(0.02, 0.05, 0.02));
  const RigidPose b = RigidPose::from_yaw(0.3 + kPi, Vec3(0.02, 0.05, 0.02));
  const Feature fa = policy_feature(JointVec::Zero(), 0.03, tcp, a);
  const Feature fb = policy_feature(JointVec::Zero(), 0.03, tcp, b);
  EXPECT_LT((fa - fb).norm(), 1e-9);
  EXPECT_GE(fa[9], -kPi / 4);
  EXPECT_LT(fa[9], kPi / 4);
}

TEST(Knn, RunsAreDeterministicAcrossJobs) {
  const KnnPolicy knn(training_samples(episodes_of(trials())), 3);
  const std::vector<TrialSpec> two(trials().begin(), trials().begin() + 2);
  TrialOptions opts;
  opts.max_steps = 150;
  EXPECT_TRUE(same_logs(run_trials(knn, arm(), sorting(), two, opts, 1), run_trials(knn, arm(), sorting(), two, opts, 3)));
}
