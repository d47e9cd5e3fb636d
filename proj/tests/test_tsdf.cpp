#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "s2r/common.hpp"
#include "s2r/tsdf.hpp"

using namespace s2r;
using namespace s2r::tsdf;
using splat::Camera;
using splat::Image;

namespace {

Camera forward_camera() {
  Camera c;
  c.fx = c.fy = 50;
  c.width = 41;
  c.height = 41;
  c.cx = c.cy = 20;
  c.near = 0.05;
  c.far = 5;
  return c;
}

TsdfGrid grid_near_unit_depth() { return TsdfGrid(Vec3(-0.05, -0.05, 0.9), 0.01, {11, 11, 21}); }

// Analytic distances in truncation units, every voxel observed.
template <class F>
TsdfGrid analytic_grid(const Vec3& origin, double voxel, std::array<int, 3> dims, F sdf) {
  TsdfGrid g(origin, voxel, dims);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        const std::size_t idx = g.index(i, j, k);
        g.tsdf[idx] = std::clamp(sdf(g.point(i, j, k)) / g.truncation(), -1.0, 1.0);
        g.weight[idx] = 1.0;
        g.color[idx] = Vec3(0.25, 0.5, 0.75);
      }
  return g;
}

Vec3 tri_normal(const Mesh& m, const std::array<int, 3>& t) {
  return (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]).normalized();
}

}  // namespace

TEST(TsdfIntegrate, SurfaceVoxelIsZeroAndFrontClamps) {
  const Camera cam = forward_camera();
  TsdfGrid g = grid_near_unit_depth();
  tsdf_integrate(g, Image(41, 41, 1, 1.0), Image(41, 41, 3, 0.5), cam);
  EXPECT_NEAR(g.tsdf[g.index(5, 5, 10)], 0.0, 1e-9);
  EXPECT_NEAR(g.tsdf[g.index(5, 5, 6)], 1.0, 1e-9);  // tau in front
  EXPECT_EQ(g.tsdf[g.index(5, 5, 0)], 1.0);
  EXPECT_NEAR(g.tsdf[g.index(5, 5, 12)], -0.5, 1e-9);
  EXPECT_EQ(g.weight[g.index(5, 5, 10)], 1.0);
  EXPECT_EQ(g.weight[g.index(5, 5, 20)], 0.0);  // beyond the truncation band
  EXPECT_NEAR(g.color[g.index(5, 5, 10)].x(), 0.5, 1e-12);
}

TEST(TsdfIntegrate, SecondViewDoublesWeightKeepsValue) {
  const Camera cam = forward_camera();
  TsdfGrid g = grid_near_unit_depth();
  const Image depth(41, 41, 1, 1.0), color(41, 41, 3, 0.5);
  tsdf_integrate(g, depth, color, cam);
  const auto once = g.tsdf;
  const auto w_once = g.weight;
  tsdf_integrate(g, depth, color, cam);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(g.tsdf[i], once[i], 1e-12);
    EXPECT_EQ(g.weight[i], 2 * w_once[i]);
  }
}

TEST(TsdfIntegrate, FarSentinelCarriesNoDepth) {
  const Camera cam = forward_camera();
  TsdfGrid g = grid_near_unit_depth();
  tsdf_integrate(g, Image(41, 41, 1, cam.far), Image(41, 41, 3, 0.5), cam);
  for (double w : g.weight) EXPECT_EQ(w, 0.0);
}

TEST(TsdfIntegrate, WeightsNeverDecrease) {
  const Camera cam = forward_camera();
  TsdfGrid g = grid_near_unit_depth();
  auto prev = g.weight;
  for (int v = 0; v < 4; ++v) {
    Image depth(41, 41, 1, 0.95 + 0.02 * v);
    tsdf_integrate(g, depth, Image(41, 41, 3, 0.1 * v), cam);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_GE(g.weight[i], prev[i]);
      EXPECT_LE(std::abs(g.tsdf[i]), 1.0);
    }
    prev = g.weight;
  }
}

TEST(TsdfIntegrate, DimensionMismatch) {
  const Camera cam = forward_camera();
  TsdfGrid g = grid_near_unit_depth();
  try {
    tsdf_integrate(g, Image(40, 41, 1, 1.0), Image(41, 41, 3), cam);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
  EXPECT_THROW(tsdf_integrate(g, Image(41, 41, 1, 1.0), Image(41, 41, 1), cam), Error);
}

TEST(ExtractMesh, SphereVerticesNearRadius) {
  const double r = 0.1, voxel = 0.01;
  const TsdfGrid g = analytic_grid(Vec3::Constant(-0.15), voxel, {31, 31, 31},
                                   [&](const Vec3& p) { return p.norm() - r; });
  const Mesh m = extract_mesh(g);
  ASSERT_GT(m.triangles.size(), 100u);
  for (const Vec3& v : m.vertices) EXPECT_NEAR(v.norm(), r, voxel);
  // Outward winding: normals point away from the center.
  int outward = 0;
  for (const auto& t : m.triangles) outward += tri_normal(m, t).dot(m.vertices[t[0]]) > 0 ? 1 : 0;
  EXPECT_EQ(outward, static_cast<int>(m.triangles.size()));
  for (const Vec3& c : m.colors) EXPECT_NEAR(c.y(), 0.5, 1e-12);
}

TEST(ExtractMesh, SphereIsClosed) {
  const TsdfGrid g = analytic_grid(Vec3::Constant(-0.15), 0.01, {31, 31, 31},
                                   [](const Vec3& p) { return p.norm() - 0.083; });
  const Mesh m = extract_mesh(g);
  std::map<std::pair<int, int>, int> edge_uses;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      ++edge_uses[{std::min(a, b), std::max(a, b)}];
    }
  for (const auto& [edge, uses] : edge_uses) ASSERT_EQ(uses, 2);
  // Euler characteristic of a sphere.
  EXPECT_EQ(static_cast<long>(m.vertices.size()) - static_cast<long>(edge_uses.size()) +
                static_cast<long>(m.triangles.size()),
            2);
}

TEST(ExtractMesh, EveryCaseIsWatertightOnRandomFields) {
  Rng rng(31);
  TsdfGrid g(Vec3::Zero(), 1.0, {9, 9, 9});
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.tsdf[i] = rng.uniform(-1, 1);
    g.weight[i] = 1.0;
  }
  // Keep the boundary positive so the surface is closed.
  for (int k = 0; k < 9; ++k)
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 9; ++i)
        if (i == 0 || j == 0 || k == 0 || i == 8 || j == 8 || k == 8) g.tsdf[g.index(i, j, k)] = 1.0;
  const Mesh m = extract_mesh(g);
  std::map<std::pair<int, int>, int> uses;
  for (const auto& t : m.triangles)
    for (int e = 0; e < 3; ++e) ++uses[{std::min(t[e], t[(e + 1) % 3]), std::max(t[e], t[(e + 1) % 3])}];
  for (const auto& [edge, n] : uses) ASSERT_EQ(n, 2);
}

TEST(ExtractMesh, AllPositiveIsEmpty) {
  const TsdfGrid g = analytic_grid(Vec3::Zero(), 0.01, {5, 5, 5}, [](const Vec3&) { return 1.0; });
  try {
    extract_mesh(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySurface);
  }
}

TEST(ExtractMesh, UnobservedCubesAreSkipped) {
  TsdfGrid g = analytic_grid(Vec3::Zero(), 0.01, {5, 5, 5}, [](const Vec3& p) { return p.z() - 0.015; });
  std::fill(g.weight.begin(), g.weight.end(), 0.0);
  EXPECT_THROW(extract_mesh(g), Error);
}

TEST(ExtractMesh, PlaneNormals) {
  const Vec3 n = Vec3(0.2, -0.3, 1.0).normalized();
  const TsdfGrid g = analytic_grid(Vec3::Constant(-0.1), 0.01, {21, 21, 21},
                                   [&](const Vec3& p) { return n.dot(p) - 0.013; });
  const Mesh m = extract_mesh(g);
  for (const auto& t : m.triangles) {
    const Vec3 tn = tri_normal(m, t);
    EXPECT_LE(std::acos(std::min(1.0, tn.dot(n))), 2.0 * kPi / 180.0);
  }
  for (const Vec3& v : m.vertices) EXPECT_NEAR(n.dot(v), 0.013, 1e-9);
}

TEST(MeshText, RoundTrip) {
  const TsdfGrid g = analytic_grid(Vec3::Constant(-0.05), 0.01, {11, 11, 11},
                                   [](const Vec3& p) { return p.norm() - 0.03; });
  const Mesh m = extract_mesh(g);
  const std::string text = mesh_to_string(m);
  const Mesh back = parse_mesh(text);
  EXPECT_EQ(back.triangles.size(), m.triangles.size());
  EXPECT_EQ(mesh_to_string(back), text);
  EXPECT_THROW(parse_mesh("mesh 1\n0 0 0\n"), Error);
}

TEST(Fusion, RenderedPlaneRoundTrip) {
  const auto gs = splat::plane_splats(geom::RigidPose::identity(), 0.2, 0.2, 0.005, Vec3(0.6, 0.4, 0.2));
  TsdfGrid g(Vec3(-0.15, -0.15, -0.06), 0.01, {31, 31, 13});
  for (int v = 0; v < 4; ++v) {
    const double a = v * kPi / 2;
    const Camera cam = Camera::look_at(Vec3(0.25 * std::cos(a), 0.25 * std::sin(a), 0.5), Vec3::Zero(),
                                       Vec3(0, 0, 1), 100, 100, 80, 60);
    const auto r = splat::render(gs, cam);
    tsdf_integrate(g, r.depth, r.color, cam);
  }
  const Mesh m = extract_mesh(g);
  double sum = 0;
  for (const Vec3& p : m.vertices) sum += std::abs(p.z());
  EXPECT_LT(sum / m.vertices.size(), 0.01);
}
