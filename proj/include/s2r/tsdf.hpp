#pragma once

#include <array>
#include <string>
#include <vector>

#include "s2r/splat.hpp"

namespace s2r::tsdf {

using geom::Vec3;

inline constexpr double kDefaultVoxel = 0.01;
inline constexpr double kTruncationVoxels = 4.0;

/// Voxel (i, j, k) is the sample point origin + voxel * (i, j, k).
/// Stored distances are in units of the truncation distance, in [-1, 1].
struct TsdfGrid {
  Vec3 origin = Vec3::Zero();
  double voxel_size = kDefaultVoxel;
  std::array<int, 3> dims{0, 0, 0};
  std::vector<double> tsdf;
  std::vector<double> weight;
  std::vector<Vec3> color;

  TsdfGrid() = default;
  TsdfGrid(const Vec3& origin, double voxel_size, std::array<int, 3> dims);

  double truncation() const { return kTruncationVoxels * voxel_size; }
  std::size_t size() const { return tsdf.size(); }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  Vec3 point(int i, int j, int k) const { return origin + voxel_size * Vec3(i, j, k); }
};

/// One projective update. Pixels holding the camera far value carry no depth.
void tsdf_integrate(TsdfGrid& grid, const splat::Image& depth, const splat::Image& color,
                    const splat::Camera& cam, int jobs = 1);

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> colors;
  std::vector<std::array<int, 3>> triangles;
};

/// Zero isosurface over cubes whose eight corners are all observed.
/// Triangles wind counter-clockwise seen from the positive side.
Mesh extract_mesh(const TsdfGrid& grid);

/// "mesh N" then N rows of three "x y z r g b" vertices.
std::string mesh_to_string(const Mesh& m);
void write_mesh(const std::string& path, const Mesh& m);
Mesh parse_mesh(const std::string& text);

}  // namespace s2r::tsdf
