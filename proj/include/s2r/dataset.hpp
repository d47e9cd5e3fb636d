#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s2r/geom.hpp"
#include "s2r/traj.hpp"

namespace s2r::dataset {

/// Episodes of one preset sharing a domain tag ("sim" or "real_analog").
struct Dataset {
  std::string preset = "custom";
  std::string domain = "sim";
  std::uint64_t base_seed = 0;
  std::vector<traj::EpisodeRecord> episodes;

  /// Throws InvalidArgument on an empty batch or mixed domain tags.
  void validate() const;
  std::size_t step_count() const;
};

/// Tags from the first episode; every episode must agree.
Dataset make_dataset(std::vector<traj::EpisodeRecord> episodes, std::uint64_t base_seed = 0);

/// Relative path of episode `i` inside a dataset directory.
std::string episode_file_name(std::size_t i);
/// FNV-1a over the serialized episodes, in order.
std::uint64_t dataset_checksum(const Dataset& d);

/// Writes `dir`/manifest.txt and `dir`/episodes/ep_NNNNNN.txt. Throws IoError.
void write_dataset(const Dataset& d, const std::string& dir);
/// Throws ParseError (file:line), ChecksumMismatch, IoError.
Dataset read_dataset(const std::string& dir);

/// One co-training draw: a step of an episode in the chosen domain.
struct Draw {
  bool from_sim = true;
  std::size_t episode = 0;
  std::size_t step = 0;
};

struct CotrainSpec {
  /// Probability of drawing from the sim set. Unset means |sim| / (|sim| + |real|) by episode count.
  std::optional<double> alpha;
  const Dataset* sim = nullptr;
  const Dataset* real = nullptr;
  std::uint64_t seed = 0;
};

/// Per-draw Bernoulli domain choice, then a uniform step of that domain.
class CotrainStream {
 public:
  /// Throws EmptyDomain, InvalidArgument.
  explicit CotrainStream(const CotrainSpec& spec);
  Draw next();
  double alpha() const { return alpha_; }

 private:
  struct Side {
    const Dataset* data = nullptr;
    std::vector<std::size_t> prefix;  // cumulative step counts
    std::size_t total = 0;
  };
  Draw draw_from(const Side& s, bool sim);

  double alpha_ = 1.0;
  Side sim_, real_;
  Rng rng_;
};

struct CoverageReport {
  int nx = 20, ny = 20;
  std::vector<std::size_t> cells;  // row-major, ix + nx * iy
  std::size_t occupied = 0;
  double occupancy = 0.0;
  std::array<std::size_t, 36> yaw_hist{};
  /// Smallest over largest yaw bin count (0 when empty).
  double yaw_ratio = 0.0;
  std::size_t samples = 0;
};

/// Target pose when its grasp interaction begins; the last observed pose if
/// the episode ended before that. Throws TargetMissing.
geom::RigidPose pre_grasp_pose(const traj::EpisodeRecord& e, const std::string& target);

/// Bins each episode's pre-grasp 2D position and yaw. Throws TargetMissing.
CoverageReport coverage_stats(const std::vector<traj::EpisodeRecord>& episodes, const geom::Aabb& workspace,
                              const std::string& target, int nx = 20, int ny = 20);
/// Same binning for raw (x, y, yaw) samples.
CoverageReport coverage_of_poses(const std::vector<geom::RigidPose>& poses, const geom::Aabb& workspace, int nx = 20,
                                 int ny = 20);

/// Columns cell,ix,iy,count.
std::string coverage_cells_csv(const CoverageReport& r);
/// Columns bin,lo_deg,hi_deg,count.
std::string coverage_yaw_csv(const CoverageReport& r);

}  // namespace s2r::dataset
