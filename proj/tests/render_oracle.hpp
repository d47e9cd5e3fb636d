#pragma once

// Brute-force per-pixel evaluation of front-to-back compositing, written
// without the renderer's projection or sorting code.

#include <cmath>
#include <vector>

#include "s2r/common.hpp"
#include "s2r/splat.hpp"

namespace s2r::cases {

struct OracleSplat {
  bool visible = false;
  double u = 0, v = 0, z = 0;
  double ia = 0, ib = 0, ic = 0;  // conic
  double opacity = 0;
  double r = 0, g = 0, b = 0;
  double bx0 = 0, bx1 = 0, by0 = 0, by1 = 0;
};

inline OracleSplat oracle_project(const splat::GaussianPrimitive& gp, const splat::Camera& cam) {
  OracleSplat s;
  const Eigen::Matrix3d rwc = cam.pose.rotation().normalized().toRotationMatrix();
  const Eigen::Vector3d pc = rwc.transpose() * (gp.position - cam.pose.translation());
  if (pc.z() <= cam.near) return s;
  const Eigen::Matrix3d rg = gp.rotation.normalized().toRotationMatrix();
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  for (int a = 0; a < 3; ++a) sigma += gp.scale[a] * gp.scale[a] * rg.col(a) * rg.col(a).transpose();
  const Eigen::Matrix3d sc = rwc.transpose() * sigma * rwc;
  const double x = pc.x(), y = pc.y(), z = pc.z();
  const double j00 = cam.fx / z, j02 = -cam.fx * x / (z * z), j11 = cam.fy / z, j12 = -cam.fy * y / (z * z);
  // Entries of J Sc J^T for J = [[j00, 0, j02], [0, j11, j12]].
  const double a = j00 * j00 * sc(0, 0) + 2 * j00 * j02 * sc(0, 2) + j02 * j02 * sc(2, 2) + 0.3;
  const double c = j11 * j11 * sc(1, 1) + 2 * j11 * j12 * sc(1, 2) + j12 * j12 * sc(2, 2) + 0.3;
  const double bb = j00 * j11 * sc(0, 1) + j00 * j12 * sc(0, 2) + j02 * j11 * sc(2, 1) + j02 * j12 * sc(2, 2);
  const double det = a * c - bb * bb;
  if (det <= 0) return s;
  s.ia = c / det;
  s.ib = -bb / det;
  s.ic = a / det;
  s.u = cam.fx * x / z + cam.cx;
  s.v = cam.fy * y / z + cam.cy;
  s.z = z;
  s.opacity = gp.opacity;
  const double half_trace = 0.5 * (a + c);
  const double rad = 3.0 * std::sqrt(half_trace + std::sqrt(std::max(0.0, half_trace * half_trace - det)));
  s.bx0 = std::ceil(s.u - rad);
  s.bx1 = std::floor(s.u + rad);
  s.by0 = std::ceil(s.v - rad);
  s.by1 = std::floor(s.v + rad);
  const Eigen::Vector3d dir = (gp.position - cam.pose.translation()).normalized();
  double rgb[3];
  for (int ch = 0; ch < 3; ++ch) {
    double val = 0.28209479177387814 * gp.sh(ch, 0) + 0.5;
    if (gp.sh_degree == 1)
      val += 0.4886025119029199 * (-dir.y() * gp.sh(ch, 1) + dir.z() * gp.sh(ch, 2) - dir.x() * gp.sh(ch, 3));
    rgb[ch] = std::min(1.0, std::max(0.0, val));
  }
  s.r = rgb[0];
  s.g = rgb[1];
  s.b = rgb[2];
  s.visible = true;
  return s;
}

/// Color at pixel (px, py): sum over k of c_k a_k prod_{j before k} (1 - a_j),
/// where "before" is ascending depth with ties broken by input index, and
/// terms whose prefix product fell below the termination threshold vanish.
inline Eigen::Vector3d oracle_pixel(const std::vector<OracleSplat>& ss, int px, int py) {
  const auto alpha_at = [&](const OracleSplat& s) {
    if (!s.visible || px < s.bx0 || px > s.bx1 || py < s.by0 || py > s.by1) return 0.0;
    const double du = px - s.u, dv = py - s.v;
    return s.opacity * std::exp(-0.5 * (s.ia * du * du + 2 * s.ib * du * dv + s.ic * dv * dv));
  };
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (std::size_t k = 0; k < ss.size(); ++k) {
    const double ak = alpha_at(ss[k]);
    if (ak <= 0) continue;
    double prefix = 1.0;
    for (std::size_t j = 0; j < ss.size(); ++j) {
      const bool before = ss[j].z < ss[k].z || (ss[j].z == ss[k].z && j < k);
      if (before) prefix *= 1.0 - alpha_at(ss[j]);
    }
    if (prefix < 1e-4) continue;
    out += prefix * ak * Eigen::Vector3d(ss[k].r, ss[k].g, ss[k].b);
  }
  return out;
}

/// Random scene of 1..5 primitives in front of a 64x48 camera.
inline std::vector<splat::GaussianPrimitive> random_scene(Rng& rng, splat::Camera& cam) {
  cam = splat::Camera::look_at(geom::Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), -1.0),
                               geom::Vec3::Zero(), geom::Vec3(0, -1, 0), 60, 60, 64, 48);
  const int n = 1 + static_cast<int>(rng.below(5));
  std::vector<splat::GaussianPrimitive> gs;
  for (int i = 0; i < n; ++i) {
    splat::GaussianPrimitive g;
    g.position = geom::Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.25, 0.25), rng.uniform(-0.3, 0.3));
    g.scale = geom::Vec3(rng.uniform(0.01, 0.15), rng.uniform(0.01, 0.15), rng.uniform(0.01, 0.15));
    g.rotation = geom::uniform_quaternion(rng.uniform(), rng.uniform(), rng.uniform());
    g.opacity = rng.uniform(0.05, 1.0);
    g.sh_degree = static_cast<int>(rng.below(2));
    for (int ch = 0; ch < 3; ++ch)
      for (int b = 0; b < (g.sh_degree ? 4 : 1); ++b) g.sh(ch, b) = rng.uniform(-1.5, 1.5);
    gs.push_back(g);
  }
  return gs;
}

}  // namespace s2r::cases
