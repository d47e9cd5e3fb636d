#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "s2r/common.hpp"
#include "s2r/presets.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;  // stdout and stderr
};

CliResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + std::string(S2R_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("s2r_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return s2r::read_text_file(p.string()); }

// Every file under `dir`, relative path to content.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

// Two trial lines from the shipped set.
fs::path short_trials(const fs::path& dir) {
  std::istringstream in(slurp(fs::path(S2R_DEFAULT_ASSET_DIR) / "trials_sorting.txt"));
  std::string line, text;
  int kept = 0;
  while (kept < 2 && std::getline(in, line))
    if (!line.empty() && line[0] != '#') {
      text += line + "\n";
      ++kept;
    }
  const fs::path p = dir / "trials.txt";
  s2r::write_text_file(p.string(), text);
  return p;
}

}  // namespace

TEST(Cli, HelpListsEveryPreset) {
  const CliResult r = run("gen --help");
  EXPECT_EQ(r.code, 0);
  for (const auto& n : s2r::presets::default_presets().names()) EXPECT_NE(r.out.find(n), std::string::npos) << n;
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, ShippedConfigMatchesBuiltIns) {
  const auto file = s2r::presets::load_presets(std::string(S2R_DEFAULT_ASSET_DIR) + "/presets.cfg");
  EXPECT_EQ(file.names(), s2r::presets::default_presets().names());
  const auto p = file.preset("3DGS-ADSim");
  EXPECT_TRUE(p.adversarial);
  EXPECT_EQ(p.mode, s2r::sim::RenderMode::splat);
  EXPECT_EQ(file.preset("BaseSim").n, 400u);
  EXPECT_EQ(file.preset("RealAnalog35").n, 35u);
  EXPECT_EQ(file.preset("RealAnalog").domain, "real_analog");
  EXPECT_DOUBLE_EQ(file.mixture("Real35&ADSim")->alpha, 0.92);
  EXPECT_THROW(file.preset("NoSuchSim"), s2r::Error);
  EXPECT_THROW(s2r::presets::parse_presets("preset 3DGS-X adversarial=on render=plain\n"), s2r::Error);
  EXPECT_THROW(s2r::presets::parse_presets("preset ADSim adversarial=off\n"), s2r::Error);
}

TEST(Cli, SceneIsDeterministicAndReportsInfeasibility) {
  const fs::path d = scratch("scene");
  const std::string spec = std::string(S2R_DEFAULT_ASSET_DIR) + "/sorting.scene";
  ASSERT_EQ(run("scene --spec " + spec + " --seed 5 --out " + (d / "a.txt").string()).code, 0);
  ASSERT_EQ(run("--seed 5 --out " + (d / "b.txt").string() + " scene --spec " + spec).code, 0);
  EXPECT_EQ(slurp(d / "a.txt"), slurp(d / "b.txt"));
  EXPECT_NE(slurp(d / "a.txt").find("object plug"), std::string::npos);

  s2r::write_text_file((d / "bad.scene").string(),
                       "workspace -0.5 -0.5 0 0.5 0.5 0.5\n"
                       "object a box 0.02 0.02 0.02\nobject b box 0.02 0.02 0.02\n"
                       "pose2D a x=[0.3,0.3] y=[0,0] yaw=[0,0]\npose2D b x=[-0.3,-0.3] y=[0,0] yaw=[0,0]\n"
                       "place_to_left a b\n");
  const CliResult r = run("scene --spec " + (d / "bad.scene").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("infeasible: "), std::string::npos) << r.out;
  EXPECT_EQ(run("scene --spec " + (d / "missing.scene").string()).code, 3);
}

TEST(Cli, GenIsByteIdenticalAcrossJobs) {
  const fs::path d = scratch("gen");
  ASSERT_EQ(run("gen --preset ADSim -n 6 --seed 3 --jobs 1 --out " + (d / "a").string()).code, 0);
  const CliResult r = run("gen --preset ADSim -n 6 --seed 3 --jobs 3 --out " + (d / "b").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("episodes 6"), std::string::npos);
  EXPECT_EQ(tree(d / "a"), tree(d / "b"));
  EXPECT_NE(slurp(d / "a" / "manifest.txt").find("preset ADSim"), std::string::npos);
  EXPECT_EQ(run("gen --preset Bogus --out " + (d / "c").string()).code, 2);
  EXPECT_EQ(run("gen --preset 'Real35&ADSim' --out " + (d / "c").string()).code, 2);
}

TEST(Cli, RealAnalogIsDomainShifted) {
  const fs::path d = scratch("real");
  const CliResult r = run("gen --preset RealAnalog35 -n 2 --out " + (d / "r").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string manifest = slurp(d / "r" / "manifest.txt");
  EXPECT_NE(manifest.find("domain real_analog"), std::string::npos);
  EXPECT_NE(manifest.find("base_seed 1000000"), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "r" / "images"));
}

TEST(Cli, EvalReportsAndIsStableAcrossJobs) {
  const fs::path d = scratch("eval");
  const std::string trials = short_trials(d).string();
  ASSERT_EQ(run("gen --preset ADSim -n 12 --out " + (d / "ad").string()).code, 0);
  ASSERT_EQ(run("gen --preset RealAnalog -n 4 --no-images --out " + (d / "real").string()).code, 0);

  CliResult r = run("eval --policy oracle --task sorting --trials " + trials);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "dataset,policy,TAR,SR1,SR3\nnone,oracle,100,100,100\n");

  const std::string knn = "eval --dataset " + (d / "ad").string() + " --trials " + trials + " --perturb --seed 4";
  const CliResult j1 = run(knn + " --jobs 1"), j2 = run(knn + " --jobs 2");
  ASSERT_EQ(j1.code, 0) << j1.out;
  EXPECT_EQ(j1.out, j2.out);
  EXPECT_EQ(j1.out.rfind("dataset,policy,TAR,SR1\nADSim,knn,", 0), 0u) << j1.out;

  r = run("eval --dataset " + (d / "ad").string() + " --real " + (d / "real").string() + " --alpha 0.92 --trials " +
          trials + " --out " + (d / "mix.csv").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(d / "mix.csv").find("RealAnalog&ADSim,knn,"), std::string("dataset,policy,TAR,SR1,SR3\n").size());

  EXPECT_EQ(run("eval --dataset " + (d / "nowhere").string() + " --trials " + trials).code, 3);
  EXPECT_EQ(run("eval --dataset " + (d / "ad").string() + " --alpha 0.5 --trials " + trials).code, 2);
}

TEST(Cli, CoverageRenderAndFuseWriteTheirFiles) {
  const fs::path d = scratch("misc");
  ASSERT_EQ(run("gen --preset BaseSim -n 5 --out " + (d / "base").string()).code, 0);
  CliResult r = run("coverage --dataset " + (d / "base").string() + " --out " + (d / "cov").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("BaseSim,5,"), std::string::npos);
  EXPECT_TRUE(fs::exists(d / "cov" / "BaseSim_cells.csv"));
  EXPECT_TRUE(fs::exists(d / "cov" / "BaseSim_yaw.csv"));

  r = run("render --task cup_place --mode plain --out " + (d / "img.ppm").string() + " --depth " +
          (d / "depth.txt").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(d / "img.ppm").rfind("P6", 0), 0u);
  EXPECT_TRUE(fs::exists(d / "depth.txt"));

  r = run("fuse --task cup_place --views 4 --voxel 0.02 --out " + (d / "mesh.txt").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(d / "mesh.txt").rfind("mesh ", 0), 0u);
}

TEST(Cli, AssetDirectoryOverride) {
  const fs::path d = scratch("assets");
  fs::create_directories(d / "cfg");
  for (const auto& e : fs::directory_iterator(S2R_DEFAULT_ASSET_DIR)) fs::copy(e.path(), d / "cfg" / e.path().filename());
  std::ofstream(d / "cfg" / "presets.cfg", std::ios::app) << "preset TinySim domain=sim adversarial=off n=2\n";
  const std::string env = "HYPERSIM_ASSET_DIR=" + (d / "cfg").string();
  CliResult r = run("gen --preset TinySim --out " + (d / "tiny").string(), env);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("episodes 2"), std::string::npos);
  EXPECT_EQ(run("gen --preset TinySim --out " + (d / "tiny2").string()).code, 2);

  std::ofstream(d / "cfg" / "presets.cfg", std::ios::app) << "preset Broken n=zero\n";
  r = run("gen --preset TinySim --out " + (d / "tiny3").string(), env);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("presets.cfg:"), std::string::npos) << r.out;
}
