#include "s2r/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "s2r/common.hpp"

namespace s2r::splat {

geom::Mat3 GaussianPrimitive::covariance() const {
  const geom::Mat3 r = rotation.normalized().toRotationMatrix();
  const geom::Mat3 s = scale.asDiagonal();
  return r * s * s.transpose() * r.transpose();
}

void GaussianPrimitive::validate() const {
  if (!position.allFinite() || !scale.allFinite()) raise(ErrorKind::InvalidArgument, "non-finite gaussian");
  if ((scale.array() <= 0.0).any()) raise(ErrorKind::SingularCovariance, "gaussian scale must be > 0");
  if (!(opacity >= 0.0 && opacity <= 1.0)) raise(ErrorKind::InvalidArgument, "opacity outside [0,1]");
  if (sh_degree != 0 && sh_degree != 1) raise(ErrorKind::InvalidArgument, "sh degree must be 0 or 1");
  if (rotation.norm() < 1e-12) raise(ErrorKind::InvalidArgument, "degenerate gaussian rotation");
}

GaussianPrimitive GaussianPrimitive::solid(const Vec3& p, const Vec3& scale, const Quat& q, double opacity,
                                           const Vec3& rgb) {
  GaussianPrimitive g;
  g.position = p;
  g.scale = scale;
  g.rotation = q.normalized();
  g.opacity = opacity;
  g.sh_degree = 0;
  g.sh.col(0) = rgb_to_sh_dc(rgb);
  return g;
}

Vec3 rgb_to_sh_dc(const Vec3& rgb) { return (rgb.array() - 0.5) / kShC0; }

Vec3 eval_sh(const GaussianPrimitive& g, const Vec3& dir) {
  Vec3 c = kShC0 * g.sh.col(0);
  if (g.sh_degree >= 1) {
    c += -kShC1 * dir.y() * g.sh.col(1) + kShC1 * dir.z() * g.sh.col(2) - kShC1 * dir.x() * g.sh.col(3);
  }
  return (c.array() + 0.5).cwiseMax(0.0).cwiseMin(1.0);
}

double eval_gaussian(const GaussianPrimitive& g, const Vec3& p) {
  geom::Mat3 cov = g.covariance();
  Eigen::LLT<geom::Mat3> llt(cov);
  if (llt.info() != Eigen::Success || !cov.allFinite()) {
    const double floor = 1e-12 * std::max(1.0, cov.trace());
    cov += floor * geom::Mat3::Identity();
    llt.compute(cov);
    if (llt.info() != Eigen::Success || !cov.allFinite())
      raise(ErrorKind::SingularCovariance, "covariance not positive definite");
  }
  const Vec3 d = p - g.position;
  const double m = d.dot(llt.solve(d));
  return std::exp(-0.5 * m);
}

void Camera::validate() const {
  if (!(fx > 0 && fy > 0)) raise(ErrorKind::InvalidArgument, "camera focal lengths must be > 0");
  if (!(near > 0 && near < far)) raise(ErrorKind::InvalidArgument, "camera requires 0 < near < far");
  if (width <= 0 || height <= 0) raise(ErrorKind::InvalidArgument, "camera size must be positive");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width,
                       int height, double near, double far) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(std::abs(z.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY());
  x.normalize();
  const Vec3 y = z.cross(x);
  geom::Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  Camera c;
  c.pose = RigidPose(eye, Quat(r));
  c.fx = fx;
  c.fy = fy;
  c.cx = 0.5 * (width - 1);
  c.cy = 0.5 * (height - 1);
  c.width = width;
  c.height = height;
  c.near = near;
  c.far = far;
  c.validate();
  return c;
}

double Splat2D::weight_at(double u, double v) const {
  const Vec2 d(u - mean.x(), v - mean.y());
  return std::exp(-0.5 * d.dot(conic * d));
}

std::optional<Splat2D> project_gaussian(const GaussianPrimitive& g, const Camera& cam, std::size_t index) {
  const RigidPose cam_from_world = cam.pose.inverse();
  const Vec3 pc = cam_from_world.apply(g.position);
  if (pc.z() <= cam.near) return std::nullopt;
  const double z = pc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z), 0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
  const geom::Mat3 w = cam_from_world.rotation().toRotationMatrix();
  Splat2D s;
  s.cov2d = j * w * g.covariance() * w.transpose() * j.transpose();
  s.cov2d(0, 0) += kCovFloorPx2;
  s.cov2d(1, 1) += kCovFloorPx2;
  s.cov2d(0, 1) = s.cov2d(1, 0) = 0.5 * (s.cov2d(0, 1) + s.cov2d(1, 0));
  const double det = s.cov2d.determinant();
  if (!(det > 0.0)) return std::nullopt;
  s.conic = s.cov2d.inverse();
  s.mean = Vec2(cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy);
  s.depth = z;
  s.opacity = g.opacity;
  s.color = eval_sh(g, (g.position - cam.pose.translation()).normalized());
  s.index = index;
  const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
  const double lmax = mid + std::sqrt(std::max(0.0, mid * mid - det));
  const double r = 3.0 * std::sqrt(lmax);
  const double fx0 = std::ceil(s.mean.x() - r), fx1 = std::floor(s.mean.x() + r);
  const double fy0 = std::ceil(s.mean.y() - r), fy1 = std::floor(s.mean.y() + r);
  if (fx1 < 0 || fy1 < 0 || fx0 > cam.width - 1 || fy0 > cam.height - 1) return std::nullopt;
  s.x0 = static_cast<int>(std::max(0.0, fx0));
  s.y0 = static_cast<int>(std::max(0.0, fy0));
  s.x1 = static_cast<int>(std::min<double>(cam.width - 1, fx1));
  s.y1 = static_cast<int>(std::min<double>(cam.height - 1, fy1));
  if (s.x0 > s.x1 || s.y0 > s.y1) return std::nullopt;
  return s;
}

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

RenderResult render(const std::vector<GaussianPrimitive>& gaussians, const Camera& cam,
                    const RenderOptions& opts) {
  cam.validate();
  std::vector<Splat2D> splats;
  splats.reserve(gaussians.size());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    gaussians[i].validate();
    if (auto s = project_gaussian(gaussians[i], cam, i)) splats.push_back(*s);
  }
  std::stable_sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });
  std::vector<std::vector<std::uint32_t>> rows(cam.height);
  for (std::uint32_t k = 0; k < splats.size(); ++k)
    for (int y = splats[k].y0; y <= splats[k].y1; ++y) rows[y].push_back(k);

  RenderResult out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1, cam.far),
                   Image(cam.width, cam.height, 1)};
  parallel_for(cam.height, opts.jobs, [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    for (int x = 0; x < cam.width; ++x) {
      double t = 1.0;
      Vec3 c = Vec3::Zero();
      double d = 0.0;
      for (std::uint32_t k : rows[y]) {
        const Splat2D& s = splats[k];
        if (x < s.x0 || x > s.x1) continue;
        if (t < kMinTransmittance) break;
        const double a = s.opacity * s.weight_at(x, y);
        if (a <= 0.0) continue;
        c += (t * a) * s.color;
        d += t * a * s.depth;
        t *= 1.0 - a;
      }
      const double alpha = 1.0 - t;
      const Vec3 px = c + t * opts.background;
      for (int ch = 0; ch < 3; ++ch) out.color.at(x, y, ch) = px[ch];
      out.alpha.at(x, y) = alpha;
      if (alpha >= kDepthAlphaMin) out.depth.at(x, y) = d / alpha;
    }
  });
  return out;
}

std::vector<GaussianPrimitive> plane_splats(const RigidPose& pose, double hx, double hy, double spacing,
                                            const Vec3& rgb) {
  if (!(spacing > 0) || hx < 0 || hy < 0) raise(ErrorKind::InvalidArgument, "plane_splats: bad size");
  const int nx = std::max(1, static_cast<int>(std::ceil(2 * hx / spacing)));
  const int ny = std::max(1, static_cast<int>(std::ceil(2 * hy / spacing)));
  const double sx = 2 * hx / nx, sy = 2 * hy / ny;
  const Vec3 scale(0.6 * std::max(sx, 1e-4), 0.6 * std::max(sy, 1e-4), 0.05 * std::min(sx, sy) + 1e-5);
  std::vector<GaussianPrimitive> out;
  out.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec3 local(-hx + (i + 0.5) * sx, -hy + (j + 0.5) * sy, 0.0);
      out.push_back(GaussianPrimitive::solid(pose.apply(local), scale, pose.rotation(), 1.0, rgb));
    }
  return out;
}

std::vector<GaussianPrimitive> box_splats(const RigidPose& pose, const Vec3& half, double spacing,
                                          const Vec3& rgb) {
  std::vector<GaussianPrimitive> out;
  // Face frames: local z is the outward normal.
  const struct {
    Vec3 offset;
    Quat q;
    double a, b;
  } faces[] = {
      {Vec3(0, 0, half.z()), Quat::Identity(), half.x(), half.y()},
      {Vec3(0, 0, -half.z()), Quat(Eigen::AngleAxisd(kPi, Vec3::UnitX())), half.x(), half.y()},
      {Vec3(half.x(), 0, 0), Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitY())), half.z(), half.y()},
      {Vec3(-half.x(), 0, 0), Quat(Eigen::AngleAxisd(-kPi / 2, Vec3::UnitY())), half.z(), half.y()},
      {Vec3(0, half.y(), 0), Quat(Eigen::AngleAxisd(-kPi / 2, Vec3::UnitX())), half.x(), half.z()},
      {Vec3(0, -half.y(), 0), Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitX())), half.x(), half.z()},
  };
  for (const auto& f : faces) {
    const RigidPose fp = geom::compose(pose, RigidPose(f.offset, f.q));
    auto part = plane_splats(fp, f.a, f.b, spacing, rgb);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::string splats_to_string(const std::vector<GaussianPrimitive>& gs) {
  int degree = 0;
  for (const auto& g : gs) degree = std::max(degree, g.sh_degree);
  std::ostringstream ss;
  ss << "splats " << gs.size() << ' ' << degree << '\n';
  for (const auto& g : gs) {
    const Quat q = g.rotation.normalized();
    const double vals[] = {g.position.x(), g.position.y(), g.position.z(), g.scale.x(), g.scale.y(),
                           g.scale.z(),    q.w(),          q.x(),          q.y(),       q.z(),
                           g.opacity};
    for (std::size_t i = 0; i < std::size(vals); ++i) ss << (i ? " " : "") << fmt_double(vals[i]);
    for (int ch = 0; ch < 3; ++ch)
      for (int b = 0; b < (degree ? 4 : 1); ++b) ss << ' ' << fmt_double(g.sh(ch, b));
    ss << '\n';
  }
  return ss.str();
}

std::vector<GaussianPrimitive> parse_splats(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) raise(ErrorKind::ParseError, "splat file: missing header");
  const auto head = split_ws(line);
  if (head.size() != 3 || head[0] != "splats") raise(ErrorKind::ParseError, "splat file: bad header");
  const long count = parse_int(head[1], "splat count");
  const long degree = parse_int(head[2], "splat sh degree");
  if (count < 0 || (degree != 0 && degree != 1)) raise(ErrorKind::ParseError, "splat file: bad header values");
  const std::size_t bands = degree ? 4 : 1;
  std::vector<GaussianPrimitive> out;
  out.reserve(count);
  int lineno = 1;
  while (static_cast<long>(out.size()) < count && std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    const std::string ctx = "splat line " + std::to_string(lineno);
    if (tok.size() != 11 + 3 * bands) raise(ErrorKind::ParseError, ctx + ": wrong field count");
    std::vector<double> v(tok.size());
    for (std::size_t i = 0; i < tok.size(); ++i) v[i] = parse_double(tok[i], ctx);
    GaussianPrimitive g;
    g.position = Vec3(v[0], v[1], v[2]);
    g.scale = Vec3(v[3], v[4], v[5]);
    g.rotation = Quat(v[6], v[7], v[8], v[9]);
    g.opacity = v[10];
    g.sh_degree = static_cast<int>(degree);
    for (int ch = 0; ch < 3; ++ch)
      for (std::size_t b = 0; b < bands; ++b) g.sh(ch, b) = v[11 + ch * bands + b];
    g.validate();
    g.rotation.normalize();
    out.push_back(g);
  }
  if (static_cast<long>(out.size()) != count) raise(ErrorKind::ParseError, "splat file: truncated");
  return out;
}

void write_splats(const std::string& path, const std::vector<GaussianPrimitive>& gs) {
  write_text_file(path, splats_to_string(gs));
}

std::vector<GaussianPrimitive> read_splats(const std::string& path) { return parse_splats(read_text_file(path)); }

std::string image_to_ppm(const Image& color) {
  if (color.channels != 3) raise(ErrorKind::DimensionMismatch, "ppm requires 3 channels");
  std::string out = "P6\n" + std::to_string(color.width) + " " + std::to_string(color.height) + "\n255\n";
  out.reserve(out.size() + color.data.size());
  for (double v : color.data)
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  return out;
}

void write_ppm(const std::string& path, const Image& color) { write_text_file(path, image_to_ppm(color)); }

Image parse_ppm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  if (!in || magic != "P6" || w <= 0 || h <= 0 || maxv != 255) raise(ErrorKind::ParseError, "ppm: bad header");
  in.get();
  Image img(w, h, 3);
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() < offset + img.data.size()) raise(ErrorKind::ParseError, "ppm: truncated");
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
  return img;
}

std::string depth_to_string(const Image& depth) {
  if (depth.channels != 1) raise(ErrorKind::DimensionMismatch, "depth grid requires 1 channel");
  std::string out = "depth " + std::to_string(depth.width) + " " + std::to_string(depth.height) + "\n";
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (x) out.push_back(' ');
      out += fmt_double(depth.at(x, y));
    }
    out.push_back('\n');
  }
  return out;
}

void write_depth(const std::string& path, const Image& depth) { write_text_file(path, depth_to_string(depth)); }

Image parse_depth(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) raise(ErrorKind::ParseError, "depth grid: missing header");
  const auto head = split_ws(line);
  if (head.size() != 3 || head[0] != "depth") raise(ErrorKind::ParseError, "depth grid: bad header");
  const int w = static_cast<int>(parse_int(head[1], "depth width"));
  const int h = static_cast<int>(parse_int(head[2], "depth height"));
  if (w <= 0 || h <= 0) raise(ErrorKind::ParseError, "depth grid: bad size");
  Image img(w, h, 1);
  for (int y = 0; y < h; ++y) {
    if (!std::getline(in, line)) raise(ErrorKind::ParseError, "depth grid: truncated");
    const auto tok = split_ws(line);
    if (static_cast<int>(tok.size()) != w) raise(ErrorKind::ParseError, "depth grid: row " + std::to_string(y));
    for (int x = 0; x < w; ++x) img.at(x, y) = parse_double(tok[x], "depth value");
  }
  return img;
}

Image read_depth(const std::string& path) { return parse_depth(read_text_file(path)); }

}  // namespace s2r::splat
