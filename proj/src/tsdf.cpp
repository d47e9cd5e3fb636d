#include "s2r/tsdf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "s2r/common.hpp"

namespace s2r::tsdf {

TsdfGrid::TsdfGrid(const Vec3& o, double voxel, std::array<int, 3> d) : origin(o), voxel_size(voxel), dims(d) {
  if (!(voxel > 0)) raise(ErrorKind::InvalidArgument, "voxel size must be > 0");
  if (d[0] < 2 || d[1] < 2 || d[2] < 2) raise(ErrorKind::InvalidArgument, "grid needs at least 2 voxels per axis");
  const std::size_t n = static_cast<std::size_t>(d[0]) * d[1] * d[2];
  tsdf.assign(n, 1.0);
  weight.assign(n, 0.0);
  color.assign(n, Vec3::Zero());
}

void tsdf_integrate(TsdfGrid& grid, const splat::Image& depth, const splat::Image& color,
                    const splat::Camera& cam, int jobs) {
  cam.validate();
  if (!(grid.voxel_size > 0)) raise(ErrorKind::InvalidArgument, "voxel size must be > 0");
  if (depth.width != cam.width || depth.height != cam.height || depth.channels != 1)
    raise(ErrorKind::DimensionMismatch, "depth image does not match camera");
  if (color.width != cam.width || color.height != cam.height || color.channels != 3)
    raise(ErrorKind::DimensionMismatch, "color image does not match camera");
  const double tau = grid.truncation();
  const geom::RigidPose cam_from_world = cam.pose.inverse();
  parallel_for(grid.dims[2], jobs, [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    for (int j = 0; j < grid.dims[1]; ++j)
      for (int i = 0; i < grid.dims[0]; ++i) {
        const Vec3 pc = cam_from_world.apply(grid.point(i, j, k));
        if (pc.z() <= cam.near) continue;
        const long u = std::lround(cam.fx * pc.x() / pc.z() + cam.cx);
        const long v = std::lround(cam.fy * pc.y() / pc.z() + cam.cy);
        if (u < 0 || v < 0 || u >= cam.width || v >= cam.height) continue;
        const double d = depth.at(u, v);
        if (!(d > 0.0) || d >= cam.far) continue;
        const double sdf = d - pc.z();
        if (sdf < -tau) continue;
        const double val = std::min(1.0, sdf / tau);
        const std::size_t idx = grid.index(i, j, k);
        const double w = grid.weight[idx];
        const double nw = w + 1.0;
        grid.tsdf[idx] = (grid.tsdf[idx] * w + val) / nw;
        const Vec3 c(color.at(u, v, 0), color.at(u, v, 1), color.at(u, v, 2));
        grid.color[idx] = (grid.color[idx] * w + c) / nw;
        grid.weight[idx] = nw;
      }
  });
}

namespace {

// Corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1). Edge e joins
// corners kEdges[e][0] < kEdges[e][1], which differ in bit kEdgeAxis[e].
struct CubeTables {
  int edges[12][2];
  int edge_axis[12];
  int edge_of[8][8];
  // Per case, closed loops of crossed edges.
  std::vector<std::vector<int>> loops[256];
};

CubeTables build_tables() {
  CubeTables t{};
  int e = 0;
  for (int c = 0; c < 8; ++c)
    for (int a = 0; a < 3; ++a)
      if (!(c & (1 << a))) {
        t.edges[e][0] = c;
        t.edges[e][1] = c | (1 << a);
        t.edge_axis[e] = a;
        t.edge_of[c][c | (1 << a)] = t.edge_of[c | (1 << a)][c] = e;
        ++e;
      }
  int faces[6][4];
  int f = 0;
  for (int a = 0; a < 3; ++a)
    for (int s = 0; s < 2; ++s) {
      const int bu = 1 << ((a + 1) % 3), bv = 1 << ((a + 2) % 3), base = s << a;
      faces[f][0] = base;
      faces[f][1] = base | bu;
      faces[f][2] = base | bu | bv;
      faces[f][3] = base | bv;
      ++f;
    }
  for (int mask = 0; mask < 256; ++mask) {
    std::vector<std::vector<int>> adj(12);
    for (const auto& face : faces) {
      const auto inside = [&](int i) { return (mask >> face[(i + 4) % 4]) & 1; };
      std::vector<int> crossed;
      for (int i = 0; i < 4; ++i)
        if (inside(i) != inside(i + 1)) crossed.push_back(t.edge_of[face[i]][face[(i + 1) % 4]]);
      if (crossed.size() == 2) {
        adj[crossed[0]].push_back(crossed[1]);
        adj[crossed[1]].push_back(crossed[0]);
      } else if (crossed.size() == 4) {
        // Diagonal face: inside corners stay separated.
        for (int i = 0; i < 4; ++i)
          if (inside(i)) {
            const int e0 = t.edge_of[face[(i + 3) % 4]][face[i]];
            const int e1 = t.edge_of[face[i]][face[(i + 1) % 4]];
            adj[e0].push_back(e1);
            adj[e1].push_back(e0);
          }
      }
    }
    std::vector<bool> used(12, false);
    for (int start = 0; start < 12; ++start) {
      if (used[start] || adj[start].empty()) continue;
      std::vector<int> loop{start};
      used[start] = true;
      int prev = -1, cur = start;
      for (;;) {
        const int next = adj[cur][0] != prev ? adj[cur][0] : adj[cur][1];
        if (next == start) break;
        loop.push_back(next);
        used[next] = true;
        prev = cur;
        cur = next;
      }
      t.loops[mask].push_back(std::move(loop));
    }
  }
  return t;
}

const CubeTables& tables() {
  static const CubeTables t = build_tables();
  return t;
}

}  // namespace

Mesh extract_mesh(const TsdfGrid& grid) {
  const CubeTables& t = tables();
  Mesh mesh;
  std::unordered_map<std::size_t, int> edge_vertex;
  // Corners exactly at zero collapse edge vertices; such triangles are dropped.
  const auto push_triangle = [&](const std::array<int, 3>& tri) {
    const Vec3 n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    if (n.squaredNorm() > 0.0) mesh.triangles.push_back(tri);
  };
  const auto corner_index = [&](int i, int j, int k, int c) {
    return grid.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
  };
  for (int k = 0; k + 1 < grid.dims[2]; ++k)
    for (int j = 0; j + 1 < grid.dims[1]; ++j)
      for (int i = 0; i + 1 < grid.dims[0]; ++i) {
        double v[8];
        std::size_t id[8];
        int mask = 0;
        bool observed = true;
        for (int c = 0; c < 8; ++c) {
          id[c] = corner_index(i, j, k, c);
          if (grid.weight[id[c]] <= 0.0) {
            observed = false;
            break;
          }
          v[c] = grid.tsdf[id[c]];
          if (v[c] < 0.0) mask |= 1 << c;
        }
        if (!observed || mask == 0 || mask == 255) continue;
        Vec3 grad = Vec3::Zero();
        for (int e = 0; e < 12; ++e) grad[t.edge_axis[e]] += v[t.edges[e][1]] - v[t.edges[e][0]];
        std::vector<int> ids;
        for (const auto& loop : t.loops[mask]) {
          ids.clear();
          for (int e : loop) {
            const int c0 = t.edges[e][0], c1 = t.edges[e][1];
            const std::size_t key = id[c0] * 3 + t.edge_axis[e];
            auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(mesh.vertices.size()));
            if (inserted) {
              const double s = v[c0] / (v[c0] - v[c1]);
              const Vec3 p0 = grid.point(i + (c0 & 1), j + ((c0 >> 1) & 1), k + ((c0 >> 2) & 1));
              const Vec3 p1 = grid.point(i + (c1 & 1), j + ((c1 >> 1) & 1), k + ((c1 >> 2) & 1));
              mesh.vertices.push_back(p0 + s * (p1 - p0));
              mesh.colors.push_back(grid.color[id[c0]] + s * (grid.color[id[c1]] - grid.color[id[c0]]));
            }
            ids.push_back(it->second);
          }
          // One winding per loop, from its area vector.
          Vec3 area = Vec3::Zero();
          for (std::size_t n = 0; n < ids.size(); ++n)
            area += mesh.vertices[ids[n]].cross(mesh.vertices[ids[(n + 1) % ids.size()]]);
          if (area.dot(grad) < 0.0) std::reverse(ids.begin(), ids.end());
          if (ids.size() == 3) {
            push_triangle({ids[0], ids[1], ids[2]});
            continue;
          }
          // Star around the loop centroid keeps all new edges inside the cube.
          Vec3 cp = Vec3::Zero(), cc = Vec3::Zero();
          for (int id_v : ids) {
            cp += mesh.vertices[id_v];
            cc += mesh.colors[id_v];
          }
          const int center = static_cast<int>(mesh.vertices.size());
          mesh.vertices.push_back(cp / static_cast<double>(ids.size()));
          mesh.colors.push_back(cc / static_cast<double>(ids.size()));
          for (std::size_t n = 0; n < ids.size(); ++n)
            push_triangle({center, ids[n], ids[(n + 1) % ids.size()]});
        }
      }
  if (mesh.triangles.empty()) raise(ErrorKind::EmptySurface, "no zero crossing in observed voxels");
  return mesh;
}

std::string mesh_to_string(const Mesh& m) {
  std::string out = "mesh " + std::to_string(m.triangles.size()) + "\n";
  for (const auto& tri : m.triangles) {
    for (int n = 0; n < 3; ++n) {
      const Vec3& p = m.vertices[tri[n]];
      const Vec3& c = m.colors[tri[n]];
      for (int a = 0; a < 3; ++a) out += (n || a ? " " : "") + fmt_double(p[a]);
      for (int a = 0; a < 3; ++a) out += " " + fmt_double(c[a]);
    }
    out.push_back('\n');
  }
  return out;
}

void write_mesh(const std::string& path, const Mesh& m) { write_text_file(path, mesh_to_string(m)); }

Mesh parse_mesh(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) raise(ErrorKind::ParseError, "mesh: missing header");
  const auto head = split_ws(line);
  if (head.size() != 2 || head[0] != "mesh") raise(ErrorKind::ParseError, "mesh: bad header");
  const long long n = parse_int(head[1], "mesh triangle count");
  Mesh m;
  for (long long t = 0; t < n; ++t) {
    if (!std::getline(in, line)) raise(ErrorKind::ParseError, "mesh: truncated");
    const auto tok = split_ws(line);
    if (tok.size() != 18) raise(ErrorKind::ParseError, "mesh: triangle " + std::to_string(t));
    std::array<int, 3> tri{};
    for (int v = 0; v < 3; ++v) {
      Vec3 p, c;
      for (int a = 0; a < 3; ++a) {
        p[a] = parse_double(tok[v * 6 + a], "mesh vertex");
        c[a] = parse_double(tok[v * 6 + 3 + a], "mesh color");
      }
      tri[v] = static_cast<int>(m.vertices.size());
      m.vertices.push_back(p);
      m.colors.push_back(c);
    }
    m.triangles.push_back(tri);
  }
  return m;
}

}  // namespace s2r::tsdf
