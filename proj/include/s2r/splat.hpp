#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "s2r/geom.hpp"

namespace s2r::splat {

using geom::Quat;
using geom::RigidPose;
using geom::Vec2;
using geom::Vec3;
using Mat2 = Eigen::Matrix2d;

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr double kCovFloorPx2 = 0.3;
inline constexpr double kMinTransmittance = 1e-4;
/// Composited alpha below which a pixel has no depth.
inline constexpr double kDepthAlphaMin = 0.5;

/// Anisotropic 3D Gaussian. Color is stored as spherical-harmonic
/// coefficients: column 0 is the DC term, columns 1..3 the degree-1 bands.
struct GaussianPrimitive {
  Vec3 position = Vec3::Zero();
  Vec3 scale = Vec3::Constant(0.01);
  Quat rotation = Quat::Identity();
  double opacity = 1.0;
  int sh_degree = 0;
  Eigen::Matrix<double, 3, 4> sh = Eigen::Matrix<double, 3, 4>::Zero();

  /// R S S^T R^T.
  geom::Mat3 covariance() const;
  void validate() const;
  /// Degree-0 primitive whose color evaluates to rgb from every direction.
  static GaussianPrimitive solid(const Vec3& p, const Vec3& scale, const Quat& q, double opacity,
                                 const Vec3& rgb);
};

Vec3 rgb_to_sh_dc(const Vec3& rgb);
/// Color along unit direction `dir` (camera to primitive), clamped to [0,1].
Vec3 eval_sh(const GaussianPrimitive& g, const Vec3& dir);

/// Unnormalized Gaussian weight in (0,1].
double eval_gaussian(const GaussianPrimitive& g, const Vec3& p);

/// Pinhole camera, world-from-camera pose; +z forward, +x right, +y down.
/// Pixel (u, v) samples image coordinates (u, v).
struct Camera {
  RigidPose pose;
  double fx = 500, fy = 500, cx = 320, cy = 240;
  int width = 640, height = 480;
  double near = 0.01, far = 10.0;

  void validate() const;
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                        int width, int height, double near = 0.01, double far = 10.0);
};

struct Splat2D {
  Vec2 mean;
  Mat2 cov2d;
  Mat2 conic;  // inverse of cov2d
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color;
  std::size_t index = 0;
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // inclusive 3-sigma pixel box, clipped

  double weight_at(double u, double v) const;
};

std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam, std::size_t index = 0);

struct Image {
  int width = 0, height = 0, channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0);
  double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct RenderResult {
  Image color;  // 3 channels
  Image depth;  // camera-z; camera far where alpha < kDepthAlphaMin
  Image alpha;  // 1 - final transmittance
};

struct RenderOptions {
  Vec3 background = Vec3::Zero();
  int jobs = 1;
};

RenderResult render(const std::vector<GaussianPrimitive>& gaussians, const Camera& cam,
                    const RenderOptions& opts = {});

/// Flat splats tiling a rectangle of half sizes (hx, hy) in the xy plane of `pose`.
std::vector<GaussianPrimitive> plane_splats(const RigidPose& pose, double hx, double hy, double spacing,
                                            const Vec3& rgb);
/// Flat splats covering the six faces of an oriented box.
std::vector<GaussianPrimitive> box_splats(const RigidPose& pose, const Vec3& half, double spacing,
                                          const Vec3& rgb);

std::string splats_to_string(const std::vector<GaussianPrimitive>& gs);
std::vector<GaussianPrimitive> parse_splats(const std::string& text);
void write_splats(const std::string& path, const std::vector<GaussianPrimitive>& gs);
std::vector<GaussianPrimitive> read_splats(const std::string& path);

/// Binary P6 with 8-bit channels.
std::string image_to_ppm(const Image& color);
void write_ppm(const std::string& path, const Image& color);
Image parse_ppm(const std::string& bytes);
/// Text grid: "depth W H" then H rows of W values.
std::string depth_to_string(const Image& depth);
void write_depth(const std::string& path, const Image& depth);
Image parse_depth(const std::string& text);
Image read_depth(const std::string& path);

}  // namespace s2r::splat
