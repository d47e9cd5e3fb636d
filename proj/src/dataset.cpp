#include "s2r/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace s2r::dataset {

namespace fs = std::filesystem;
using geom::Vec3;

void Dataset::validate() const {
  if (episodes.empty()) raise(ErrorKind::InvalidArgument, "dataset has no episodes");
  if (domain != "sim" && domain != "real_analog")
    raise(ErrorKind::InvalidArgument, "domain must be sim or real_analog, got '" + domain + "'");
  for (const auto& e : episodes)
    if (e.domain != domain)
      raise(ErrorKind::InvalidArgument, "episode " + std::to_string(e.seed) + " has domain '" + e.domain +
                                            "' in a '" + domain + "' dataset");
}

std::size_t Dataset::step_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.steps.size();
  return n;
}

Dataset make_dataset(std::vector<traj::EpisodeRecord> episodes, std::uint64_t base_seed) {
  if (episodes.empty()) raise(ErrorKind::InvalidArgument, "dataset has no episodes");
  Dataset d;
  d.preset = episodes.front().preset;
  d.domain = episodes.front().domain;
  d.base_seed = base_seed;
  d.episodes = std::move(episodes);
  d.validate();
  return d;
}

std::string episode_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episodes/ep_%06zu.txt", i);
  return buf;
}

std::uint64_t dataset_checksum(const Dataset& d) {
  std::uint64_t h = fnv1a64("");
  for (const auto& e : d.episodes) h = fnv1a64(traj::episode_to_string(e), h);
  return h;
}

void write_dataset(const Dataset& d, const std::string& dir) {
  d.validate();
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "episodes", ec);
  if (ec) raise(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
  std::ostringstream m;
  m << "dataset 1\n"
    << "preset " << d.preset << '\n'
    << "domain " << d.domain << '\n'
    << "base_seed " << d.base_seed << '\n'
    << "count " << d.episodes.size() << '\n'
    << "checksum " << hex64(dataset_checksum(d)) << '\n';
  for (std::size_t i = 0; i < d.episodes.size(); ++i) {
    const std::string text = traj::episode_to_string(d.episodes[i]);
    const std::string name = episode_file_name(i);
    write_text_file((fs::path(dir) / name).string(), text);
    m << "episode " << name << ' ' << (d.episodes[i].success ? "success" : "failure") << ' ' << hex64(fnv1a64(text))
      << '\n';
  }
  write_text_file((fs::path(dir) / "manifest.txt").string(), m.str());
}

namespace {

[[noreturn]] void manifest_error(const std::string& path, int line, const std::string& what) {
  raise(ErrorKind::ParseError, path + ":" + std::to_string(line) + ": " + what);
}

std::uint64_t parse_hex(const std::string& s, const std::string& path, int line) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(s, &used, 16);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  manifest_error(path, line, "bad hash '" + s + "'");
}

}  // namespace

Dataset read_dataset(const std::string& dir) {
  const std::string mpath = (fs::path(dir) / "manifest.txt").string();
  std::istringstream in(read_text_file(mpath));
  std::string line;
  int no = 0;
  auto keyed = [&](const std::string& key) {
    ++no;
    if (!std::getline(in, line)) manifest_error(mpath, no, "unexpected end of file");
    auto t = split_ws(line);
    if (t.size() != 2 || t[0] != key) manifest_error(mpath, no, "expected '" + key + " <value>'");
    return t[1];
  };
  if (keyed("dataset") != "1") manifest_error(mpath, no, "unsupported manifest version");
  Dataset d;
  d.preset = keyed("preset");
  d.domain = keyed("domain");
  auto integer = [&](const std::string& key) {
    const std::string v = keyed(key);
    try {
      return parse_int(v, key);
    } catch (const Error&) {
      manifest_error(mpath, no, "bad " + key + " '" + v + "'");
    }
  };
  d.base_seed = static_cast<std::uint64_t>(integer("base_seed"));
  const long long count = integer("count");
  const std::uint64_t checksum = parse_hex(keyed("checksum"), mpath, no);

  struct Entry {
    std::string file;
    bool success;
    std::uint64_t hash;
  };
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    const auto t = split_ws(line);
    if (t.size() != 4 || t[0] != "episode" || (t[2] != "success" && t[2] != "failure"))
      manifest_error(mpath, no, "expected 'episode <file> success|failure <hash>'");
    entries.push_back({t[1], t[2] == "success", parse_hex(t[3], mpath, no)});
  }
  std::size_t present = 0;
  if (fs::is_directory(fs::path(dir) / "episodes"))
    for (const auto& f : fs::directory_iterator(fs::path(dir) / "episodes"))
      present += f.is_regular_file() && f.path().extension() == ".txt" ? 1 : 0;
  if (count < 0 || static_cast<std::size_t>(count) != entries.size() || present != entries.size())
    raise(ErrorKind::ChecksumMismatch, mpath + ": count " + std::to_string(count) + ", " +
                                           std::to_string(entries.size()) + " listed, " + std::to_string(present) +
                                           " episode files present");
  for (const auto& en : entries) {
    const std::string path = (fs::path(dir) / en.file).string();
    if (!fs::exists(path)) raise(ErrorKind::ChecksumMismatch, mpath + ": listed file missing: " + en.file);
    const std::string text = read_text_file(path);
    // Parsed first so a damaged file reports its failing line.
    d.episodes.push_back(traj::parse_episode(text, path));
    if (fnv1a64(text) != en.hash) raise(ErrorKind::ChecksumMismatch, path + ": content hash differs from manifest");
    if (d.episodes.back().success != en.success)
      raise(ErrorKind::ChecksumMismatch, path + ": outcome differs from manifest");
  }
  if (dataset_checksum(d) != checksum) raise(ErrorKind::ChecksumMismatch, mpath + ": dataset checksum differs");
  d.validate();
  return d;
}

CotrainStream::CotrainStream(const CotrainSpec& spec) : rng_(mix_seed(spec.seed, 0xc07a)) {
  auto side = [](const Dataset* d) {
    Side s;
    s.data = d;
    if (!d) return s;
    for (const auto& e : d->episodes) {
      s.total += e.steps.size();
      s.prefix.push_back(s.total);
    }
    return s;
  };
  sim_ = side(spec.sim);
  real_ = side(spec.real);
  if (spec.alpha) {
    alpha_ = *spec.alpha;
    if (!(alpha_ >= 0 && alpha_ <= 1)) raise(ErrorKind::InvalidArgument, "alpha must be in [0, 1]");
  } else {
    const double ns = spec.sim ? static_cast<double>(spec.sim->episodes.size()) : 0.0;
    const double nr = spec.real ? static_cast<double>(spec.real->episodes.size()) : 0.0;
    if (ns + nr == 0) raise(ErrorKind::EmptyDomain, "no episodes in either domain");
    alpha_ = ns / (ns + nr);
  }
  if (alpha_ > 0 && sim_.total == 0) raise(ErrorKind::EmptyDomain, "alpha > 0 needs a non-empty sim set");
  if (alpha_ < 1 && real_.total == 0) raise(ErrorKind::EmptyDomain, "alpha < 1 needs a non-empty real set");
}

Draw CotrainStream::draw_from(const Side& s, bool sim) {
  const std::size_t k = rng_.below(s.total);
  const auto it = std::upper_bound(s.prefix.begin(), s.prefix.end(), k);
  Draw d;
  d.from_sim = sim;
  d.episode = static_cast<std::size_t>(it - s.prefix.begin());
  d.step = k - (d.episode ? s.prefix[d.episode - 1] : 0);
  return d;
}

Draw CotrainStream::next() {
  // alpha in {0, 1} consumes no domain draw, so the choice is exact.
  bool sim = alpha_ >= 1.0;
  if (alpha_ > 0.0 && alpha_ < 1.0) sim = rng_.bernoulli(alpha_);
  return draw_from(sim ? sim_ : real_, sim);
}

geom::RigidPose pre_grasp_pose(const traj::EpisodeRecord& e, const std::string& target) {
  const scene::ObjectInstance* o = e.layout.find(target);
  if (!o) raise(ErrorKind::TargetMissing, "episode " + std::to_string(e.seed) + " has no '" + target + "'");
  geom::RigidPose pose = o->pose;
  for (const auto& s : e.steps) {
    if (s.obs.target_id != target) continue;
    pose = s.obs.target_pose;
    if (s.event == traj::Event::interaction) break;
  }
  return pose;
}

CoverageReport coverage_of_poses(const std::vector<geom::RigidPose>& poses, const geom::Aabb& workspace, int nx,
                                 int ny) {
  if (nx < 1 || ny < 1) raise(ErrorKind::InvalidArgument, "coverage grid needs positive dimensions");
  const Vec3 ext = workspace.max - workspace.min;
  if (!(ext.x() > 0 && ext.y() > 0)) raise(ErrorKind::InvalidArgument, "coverage workspace is degenerate");
  CoverageReport r;
  r.nx = nx;
  r.ny = ny;
  r.cells.assign(static_cast<std::size_t>(nx) * ny, 0);
  const int nbins = static_cast<int>(r.yaw_hist.size());
  for (const auto& p : poses) {
    const Vec3 t = p.translation();
    const int ix = std::clamp(static_cast<int>(std::floor((t.x() - workspace.min.x()) / ext.x() * nx)), 0, nx - 1);
    const int iy = std::clamp(static_cast<int>(std::floor((t.y() - workspace.min.y()) / ext.y() * ny)), 0, ny - 1);
    ++r.cells[static_cast<std::size_t>(ix + nx * iy)];
    const double yaw = wrap_angle(p.yaw());
    const int b = std::clamp(static_cast<int>(std::floor((yaw + kPi) / (2 * kPi) * nbins)), 0, nbins - 1);
    ++r.yaw_hist[static_cast<std::size_t>(b)];
  }
  r.samples = poses.size();
  r.occupied = static_cast<std::size_t>(std::count_if(r.cells.begin(), r.cells.end(), [](std::size_t c) { return c > 0; }));
  r.occupancy = static_cast<double>(r.occupied) / static_cast<double>(r.cells.size());
  const auto [lo, hi] = std::minmax_element(r.yaw_hist.begin(), r.yaw_hist.end());
  r.yaw_ratio = *hi > 0 ? static_cast<double>(*lo) / static_cast<double>(*hi) : 0.0;
  return r;
}

CoverageReport coverage_stats(const std::vector<traj::EpisodeRecord>& episodes, const geom::Aabb& workspace,
                              const std::string& target, int nx, int ny) {
  std::vector<geom::RigidPose> poses;
  poses.reserve(episodes.size());
  for (const auto& e : episodes) poses.push_back(pre_grasp_pose(e, target));
  return coverage_of_poses(poses, workspace, nx, ny);
}

std::string coverage_cells_csv(const CoverageReport& r) {
  std::ostringstream s;
  s << "cell,ix,iy,count\n";
  for (int iy = 0; iy < r.ny; ++iy)
    for (int ix = 0; ix < r.nx; ++ix) {
      const int c = ix + r.nx * iy;
      s << c << ',' << ix << ',' << iy << ',' << r.cells[static_cast<std::size_t>(c)] << '\n';
    }
  return s.str();
}

std::string coverage_yaw_csv(const CoverageReport& r) {
  std::ostringstream s;
  s << "bin,lo_deg,hi_deg,count\n";
  const int n = static_cast<int>(r.yaw_hist.size());
  for (int b = 0; b < n; ++b)
    s << b << ',' << fmt_double(-180.0 + 360.0 * b / n) << ',' << fmt_double(-180.0 + 360.0 * (b + 1) / n) << ','
      << r.yaw_hist[static_cast<std::size_t>(b)] << '\n';
  return s.str();
}

}  // namespace s2r::dataset
