// Operator entry points: scene, gen, render, fuse, coverage, eval.
#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "s2r/dataset.hpp"
#include "s2r/eval.hpp"
#include "s2r/presets.hpp"
#include "s2r/tsdf.hpp"

namespace fs = std::filesystem;
using namespace s2r;
using geom::Vec3;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

std::string asset_dir() {
  if (const char* env = std::getenv("HYPERSIM_ASSET_DIR"); env && *env) return env;
  return S2R_DEFAULT_ASSET_DIR;
}

std::string asset(const std::string& name) { return (fs::path(asset_dir()) / name).string(); }

sim::ArmModel load_arm_or_default() {
  const std::string p = asset("arm.cfg");
  return fs::exists(p) ? sim::load_arm(p) : sim::default_arm();
}

presets::PresetTable load_presets_or_default() {
  const std::string p = asset("presets.cfg");
  return fs::exists(p) ? presets::load_presets(p) : presets::default_presets();
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    write_text_file(out, text);
  }
}

struct Global {
  std::uint64_t seed = 0;
  unsigned jobs = default_jobs();
  std::string out;
};

// ---- scene ----

struct SceneArgs {
  std::string spec, task = "sorting";
};

scene::TaskSpec resolve_spec(const SceneArgs& a) {
  if (!a.spec.empty()) return scene::parse_task_spec(read_text_file(a.spec));
  return traj::task_by_name(a.task).scene;
}

void cmd_scene(const Global& g, const SceneArgs& a) {
  emit(g.out, scene::layout_to_string(scene::generate_layout(resolve_spec(a), g.seed)));
}

// ---- gen ----

struct GenArgs {
  std::string preset, task = "sorting";
  std::size_t n = 0;
  bool success_only = false, no_images = false;
};

void cmd_gen(const Global& g, const GenArgs& a) {
  if (g.out.empty()) raise(ErrorKind::InvalidArgument, "gen needs --out <dir>");
  const auto table = load_presets_or_default();
  if (table.mixture(a.preset)) raise(ErrorKind::InvalidArgument, a.preset + " is a co-training mixture; gen its parts");
  const presets::Preset p = table.preset(a.preset);
  const std::size_t n = a.n ? a.n : p.n;
  const auto arm = load_arm_or_default();
  const std::uint64_t base = g.seed + p.seed_offset;
  auto eps = traj::generate_batch(arm, traj::task_by_name(a.task), n, p.adversarial_config(), base,
                                  p.gen_options(a.no_images ? "" : g.out), g.jobs, a.success_only);
  if (eps.empty()) raise(ErrorKind::Infeasible, "infeasible: no successful episodes");
  const auto d = dataset::make_dataset(std::move(eps), base);
  dataset::write_dataset(d, g.out);
  std::size_t ok = 0;
  for (const auto& e : d.episodes) ok += e.success ? 1 : 0;
  std::cout << "preset " << p.name << " episodes " << d.episodes.size() << " success " << ok << " steps "
            << d.step_count() << " checksum " << hex64(dataset::dataset_checksum(d)) << '\n';
}

// ---- render ----

struct RenderArgs {
  SceneArgs scene;
  std::string layout, mode = "splat", camera = "head", depth;
};

scene::SceneLayout resolve_layout(const Global& g, const SceneArgs& s, const std::string& layout) {
  if (!layout.empty()) return scene::parse_layout(read_text_file(layout));
  return scene::generate_layout(resolve_spec(s), g.seed);
}

void cmd_render(const Global& g, const RenderArgs& a) {
  if (g.out.empty()) raise(ErrorKind::InvalidArgument, "render needs --out <file.ppm>");
  const auto arm = load_arm_or_default();
  const auto layout = resolve_layout(g, a.scene, a.layout);
  if (layout.objects.empty()) raise(ErrorKind::InvalidArgument, "layout has no objects");
  const auto background = sim::procedural_background(g.seed);
  sim::ObserveOptions oo;
  oo.render = true;
  oo.mode = sim::parse_render_mode(a.mode);
  oo.background = &background;
  oo.jobs = static_cast<int>(g.jobs);
  const auto w = sim::make_world(arm, layout, g.seed);
  const auto ob = sim::observe(arm, w, layout.objects.front().id, oo);
  if (a.camera != "head" && a.camera != "wrist") raise(ErrorKind::InvalidArgument, "camera must be head or wrist");
  const auto& r = a.camera == "head" ? *ob.head : *ob.wrist;
  if (fs::path(g.out).has_parent_path()) fs::create_directories(fs::path(g.out).parent_path());
  splat::write_ppm(g.out, r.color);
  if (!a.depth.empty()) splat::write_depth(a.depth, r.depth);
}

// ---- fuse ----

struct FuseArgs {
  SceneArgs scene;
  std::string layout;
  int views = 8;
  double voxel = tsdf::kDefaultVoxel;
};

void cmd_fuse(const Global& g, const FuseArgs& a) {
  if (g.out.empty()) raise(ErrorKind::InvalidArgument, "fuse needs --out <mesh file>");
  if (a.views < 1) raise(ErrorKind::InvalidArgument, "views must be >= 1");
  if (!(a.voxel > 0)) raise(ErrorKind::InvalidArgument, "voxel must be > 0");
  const auto layout = resolve_layout(g, a.scene, a.layout);
  const auto gs = sim::foreground_splats(layout);
  const geom::Aabb& ws = layout.workspace;
  const Vec3 ext = ws.max - ws.min;
  std::array<int, 3> dims{};
  for (int i = 0; i < 3; ++i) dims[static_cast<std::size_t>(i)] = static_cast<int>(std::ceil(ext[i] / a.voxel)) + 1;
  tsdf::TsdfGrid grid(ws.min, a.voxel, dims);
  const Vec3 center = ws.center();
  // Orbit around the workspace, looking down at 45 degrees.
  const double radius = 1.2 * ext.head<2>().norm();
  for (int v = 0; v < a.views; ++v) {
    const double t = 2 * kPi * v / a.views;
    const Vec3 eye = center + Vec3(radius * std::cos(t), radius * std::sin(t), radius);
    const auto cam = splat::Camera::look_at(eye, center, Vec3::UnitZ(), 200, 200, 160, 120);
    splat::RenderOptions ro;
    ro.jobs = static_cast<int>(g.jobs);
    const auto r = splat::render(gs, cam, ro);
    tsdf::tsdf_integrate(grid, r.depth, r.color, cam, static_cast<int>(g.jobs));
  }
  const auto mesh = tsdf::extract_mesh(grid);
  if (fs::path(g.out).has_parent_path()) fs::create_directories(fs::path(g.out).parent_path());
  tsdf::write_mesh(g.out, mesh);
  std::cout << "mesh vertices " << mesh.vertices.size() << " triangles " << mesh.triangles.size() << '\n';
}

// ---- coverage ----

struct CoverageArgs {
  std::vector<std::string> datasets;
  std::string target;
  int nx = 20, ny = 20;
};

std::string grasp_target_of(const dataset::Dataset& d) {
  return traj::task_by_name(d.episodes.front().task).subtasks.front().target;
}

void cmd_coverage(const Global& g, const CoverageArgs& a) {
  std::ostringstream summary;
  summary << "dataset,episodes,occupied,occupancy,yaw_ratio\n";
  for (const auto& dir : a.datasets) {
    const auto d = dataset::read_dataset(dir);
    const std::string target = a.target.empty() ? grasp_target_of(d) : a.target;
    const auto r = dataset::coverage_stats(d.episodes, d.episodes.front().layout.workspace, target, a.nx, a.ny);
    summary << d.preset << ',' << d.episodes.size() << ',' << r.occupied << ',' << fmt_double(r.occupancy) << ','
            << fmt_double(r.yaw_ratio) << '\n';
    if (!g.out.empty()) {
      fs::create_directories(g.out);
      write_text_file((fs::path(g.out) / (d.preset + "_cells.csv")).string(), dataset::coverage_cells_csv(r));
      write_text_file((fs::path(g.out) / (d.preset + "_yaw.csv")).string(), dataset::coverage_yaw_csv(r));
    }
  }
  if (!g.out.empty()) write_text_file((fs::path(g.out) / "coverage.csv").string(), summary.str());
  std::cout << summary.str();
}

// ---- eval ----

struct EvalArgs {
  std::string dataset, real, trials, policy = "knn", label, task;
  std::optional<double> alpha;
  int k = eval::kDefaultNeighbours;
  std::size_t draws = 0;
  std::size_t make_trials = 0;
  bool perturb = false;
};

void cmd_eval(const Global& g, const EvalArgs& a) {
  const auto arm = load_arm_or_default();
  std::optional<dataset::Dataset> sim_d, real_d;
  if (!a.dataset.empty()) sim_d = dataset::read_dataset(a.dataset);
  if (!a.real.empty()) real_d = dataset::read_dataset(a.real);
  if (a.alpha && !real_d) raise(ErrorKind::InvalidArgument, "--alpha needs --real");
  std::string task_name = a.task;
  if (task_name.empty()) task_name = sim_d ? sim_d->episodes.front().task : real_d ? real_d->episodes.front().task : "sorting";
  const auto task = traj::task_by_name(task_name);
  if (a.make_trials) {
    // Trial seeds start at 1000, clear of the default generation seeds.
    emit(g.out, eval::trials_to_string(eval::make_trial_set(arm, task, a.make_trials, 1000 + g.seed)));
    return;
  }
  const std::string trials_path = a.trials.empty() ? asset("trials_" + task_name + ".txt") : a.trials;
  const auto trials = eval::load_trials(trials_path);
  if (trials.empty()) raise(ErrorKind::InvalidArgument, trials_path + ": no trials");

  std::unique_ptr<eval::Policy> policy;
  std::string label = a.label;
  if (a.policy == "oracle") {
    policy = std::make_unique<eval::OraclePolicy>(arm, task);
  } else if (a.policy == "zero") {
    policy = std::make_unique<eval::ZeroPolicy>();
  } else if (a.policy == "replay") {
    if (!sim_d) raise(ErrorKind::InvalidArgument, "replay needs --dataset");
    policy = std::make_unique<eval::FrozenReplayPolicy>(eval::FrozenReplayPolicy::from_episodes(sim_d->episodes));
  } else if (a.policy == "knn") {
    if (!sim_d) raise(ErrorKind::InvalidArgument, "knn needs --dataset");
    std::vector<eval::TrainingSample> samples;
    if (real_d) {
      dataset::CotrainSpec spec;
      spec.alpha = a.alpha;
      spec.sim = &*sim_d;
      spec.real = &*real_d;
      spec.seed = g.seed;
      const std::size_t draws = a.draws ? a.draws : sim_d->step_count() + real_d->step_count();
      samples = eval::cotrain_samples(spec, draws);
      if (label.empty()) label = real_d->preset + "&" + sim_d->preset;
    } else {
      samples = eval::training_samples(*sim_d);
    }
    policy = std::make_unique<eval::KnnPolicy>(std::move(samples), a.k, "knn");
  } else {
    raise(ErrorKind::InvalidArgument, "policy must be knn, oracle, replay or zero");
  }
  if (label.empty()) label = sim_d ? sim_d->preset : "none";

  std::vector<eval::TrialLog> logs;
  if (a.perturb) {
    traj::AdversarialConfig adv;
    adv.enabled = true;
    const auto schedule = eval::make_perturb_schedule(arm, task, trials, adv, g.seed);
    logs = eval::run_perturbed_trials(*policy, arm, task, trials, schedule, {}, g.jobs);
  } else {
    logs = eval::run_trials(*policy, arm, task, trials, {}, g.jobs);
  }
  emit(g.out, eval::report_csv({{label, policy->name(), eval::compute_metrics(logs)}}, a.perturb));
}

int exit_code(ErrorKind k) {
  return (k == ErrorKind::IoError || k == ErrorKind::ChecksumMismatch) ? kExitIo : kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  Global g;
  CLI::App app{"Synthetic manipulation data pipeline: scenes, demonstrations, rendering, fusion, evaluation"};
  app.require_subcommand(1);
  // Global flags may also follow the subcommand.
  app.fallthrough();
  app.add_option("--seed", g.seed, "Base seed")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (output does not depend on it)")->capture_default_str();
  app.add_option("--out", g.out, "Output file or directory");
  app.footer("Assets (arm.cfg, presets.cfg, trial sets) are read from $HYPERSIM_ASSET_DIR, default " +
             std::string(S2R_DEFAULT_ASSET_DIR) + ".\nExit codes: 0 success, 2 infeasible or bad configuration, 3 I/O.");

  std::string preset_names;
  try {
    for (const auto& n : load_presets_or_default().names()) preset_names += (preset_names.empty() ? "" : ", ") + n;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  }

  SceneArgs sa;
  auto* scene_cmd = app.add_subcommand("scene", "Solve a scene spec into a layout");
  scene_cmd->add_option("--spec", sa.spec, "Scene spec file");
  scene_cmd->add_option("--task", sa.task, "Built-in spec when --spec is absent (sorting, cup_place)")->capture_default_str();

  GenArgs ga;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a demonstration dataset from a preset");
  gen_cmd->add_option("--preset", ga.preset, "One of: " + preset_names)->required();
  gen_cmd->add_option("-n", ga.n, "Episodes (default from the preset)");
  gen_cmd->add_option("--task", ga.task, "sorting or cup_place")->capture_default_str();
  gen_cmd->add_flag("--success-only", ga.success_only, "Drop failed episodes");
  gen_cmd->add_flag("--no-images", ga.no_images, "Skip image rendering");

  RenderArgs ra;
  auto* render_cmd = app.add_subcommand("render", "Render a layout from the head or wrist camera");
  render_cmd->add_option("--layout", ra.layout, "Layout file (default: solve --spec/--task with --seed)");
  render_cmd->add_option("--spec", ra.scene.spec, "Scene spec file");
  render_cmd->add_option("--task", ra.scene.task, "Built-in spec")->capture_default_str();
  render_cmd->add_option("--mode", ra.mode, "plain or splat")->capture_default_str();
  render_cmd->add_option("--camera", ra.camera, "head or wrist")->capture_default_str();
  render_cmd->add_option("--depth", ra.depth, "Also write the depth map here");

  FuseArgs fa;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse orbit renderings of a layout into a mesh");
  fuse_cmd->add_option("--layout", fa.layout, "Layout file (default: solve --spec/--task with --seed)");
  fuse_cmd->add_option("--spec", fa.scene.spec, "Scene spec file");
  fuse_cmd->add_option("--task", fa.scene.task, "Built-in spec")->capture_default_str();
  fuse_cmd->add_option("--views", fa.views, "Camera poses on the orbit")->capture_default_str();
  fuse_cmd->add_option("--voxel", fa.voxel, "Voxel edge (m)")->capture_default_str();

  CoverageArgs ca;
  auto* cov_cmd = app.add_subcommand("coverage", "Pre-grasp pose coverage of datasets");
  cov_cmd->add_option("--dataset", ca.datasets, "Dataset directory (repeatable)")->required();
  cov_cmd->add_option("--target", ca.target, "Object id (default: the task's grasp target)");
  cov_cmd->add_option("--nx", ca.nx, "Grid columns")->capture_default_str();
  cov_cmd->add_option("--ny", ca.ny, "Grid rows")->capture_default_str();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy on a trial set");
  eval_cmd->add_option("--dataset", ea.dataset, "Training (sim) dataset directory");
  eval_cmd->add_option("--real", ea.real, "Second (real-analog) dataset for co-training");
  eval_cmd->add_option("--alpha", ea.alpha, "Sim draw probability (default: by episode count)");
  eval_cmd->add_option("--draws", ea.draws, "Co-training draws (default: total steps)");
  eval_cmd->add_option("--trials", ea.trials, "Trial set file (default: trials_<task>.txt in the asset dir)");
  eval_cmd->add_option("--policy", ea.policy, "knn, oracle, replay or zero")->capture_default_str();
  eval_cmd->add_option("-k", ea.k, "Neighbours for knn")->capture_default_str();
  eval_cmd->add_option("--task", ea.task, "Task when no dataset names it");
  eval_cmd->add_option("--label", ea.label, "Dataset column of the report");
  eval_cmd->add_option("--make-trials", ea.make_trials, "Write a solvable trial set of this size instead");
  eval_cmd->add_flag("--perturb", ea.perturb, "Seeded target displacement during attempt 1 (TAR and SR1 only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*scene_cmd) cmd_scene(g, sa);
    else if (*gen_cmd) cmd_gen(g, ga);
    else if (*render_cmd) cmd_render(g, ra);
    else if (*fuse_cmd) cmd_fuse(g, fa);
    else if (*cov_cmd) cmd_coverage(g, ca);
    else if (*eval_cmd) cmd_eval(g, ea);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
