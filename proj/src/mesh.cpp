#include "proxygs/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace proxygs {

Vec3 face_normal(const TriangleMesh& mesh, std::size_t f) {
  const Face& t = mesh.faces[f];
  const Vec3& a = mesh.vertices[t[0]];
  const Vec3 n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

Vec4 face_plane(const TriangleMesh& mesh, std::size_t f) {
  const Vec3 n = face_normal(mesh, f);
  if (n.isZero()) return Vec4::Zero();
  return {n.x(), n.y(), n.z(), -n.dot(mesh.vertices[mesh.faces[f][0]])};
}

std::string mesh_violations(const TriangleMesh& mesh) {
  std::ostringstream out;
  const auto nv = mesh.vertices.size();
  for (std::size_t v = 0; v < nv; ++v) {
    if (!mesh.vertices[v].allFinite()) out << "vertex " << v << " has non-finite coordinates\n";
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    bool in_range = true;
    for (auto idx : t) {
      if (idx >= nv) {
        out << "face " << f << " index " << idx << " out of range (vertex count " << nv << ")\n";
        in_range = false;
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      out << "face " << f << " is degenerate (repeated vertex index)\n";
    } else if (in_range && face_normal(mesh, f).isZero()) {
      out << "face " << f << " has zero area\n";
    }
  }
  std::string s = out.str();
  if (!s.empty()) s.pop_back();
  return s;
}

void validate_mesh(const TriangleMesh& mesh) {
  const std::string v = mesh_violations(mesh);
  if (!v.empty()) throw std::invalid_argument("invalid mesh:\n" + v);
}

std::vector<std::pair<EdgeKey, std::vector<std::uint32_t>>> edge_faces(const TriangleMesh& mesh) {
  std::map<EdgeKey, std::vector<std::uint32_t>> edges;
  for (std::uint32_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    for (int k = 0; k < 3; ++k) edges[make_edge(t[k], t[(k + 1) % 3])].push_back(f);
  }
  return {edges.begin(), edges.end()};
}

void annotate_mesh(TriangleMesh& mesh, double feature_angle_deg) {
  mesh.boundary_flags.assign(mesh.vertices.size(), false);
  mesh.feature_edges.clear();
  const double cos_limit = std::cos(feature_angle_deg * std::numbers::pi / 180.0);
  for (const auto& [edge, faces] : edge_faces(mesh)) {
    if (faces.size() == 1) {
      mesh.boundary_flags[edge.first] = true;
      mesh.boundary_flags[edge.second] = true;
    } else if (faces.size() == 2) {
      const double c = face_normal(mesh, faces[0]).dot(face_normal(mesh, faces[1]));
      if (c < cos_limit) mesh.feature_edges.insert(edge);
    }
  }
}

std::pair<Vec3, Vec3> mesh_bounds(const TriangleMesh& mesh) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

void append_mesh(TriangleMesh& mesh, const TriangleMesh& other) {
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), other.vertices.begin(), other.vertices.end());
  for (Face f : other.faces) {
    for (auto& i : f) i += base;
    mesh.faces.push_back(f);
  }
  mesh.boundary_flags.clear();
  mesh.feature_edges.clear();
}

TriangleMesh unit_cube() { return make_box(Vec3::Zero(), Vec3::Ones(), 1); }

TriangleMesh make_box(const Vec3& lo, const Vec3& hi, int subdiv, bool inward) {
  TriangleMesh mesh;
  const int n = std::max(1, subdiv);
  // Each side: fixed axis, its value, and two in-plane axes ordered so that
  // (u x v) points outward.
  struct Side {
    int axis;
    bool high;
    int u;
    int v;
  };
  const Side sides[6] = {{0, false, 2, 1}, {0, true, 1, 2}, {1, false, 0, 2},
                         {1, true, 2, 0},  {2, false, 1, 0}, {2, true, 0, 1}};
  for (const Side& s : sides) {
    const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
    for (int j = 0; j <= n; ++j) {
      for (int i = 0; i <= n; ++i) {
        Vec3 p;
        p[s.axis] = s.high ? hi[s.axis] : lo[s.axis];
        p[s.u] = lo[s.u] + (hi[s.u] - lo[s.u]) * i / n;
        p[s.v] = lo[s.v] + (hi[s.v] - lo[s.v]) * j / n;
        mesh.vertices.push_back(p);
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const std::uint32_t a = base + j * (n + 1) + i;
        const std::uint32_t b = a + 1;
        const std::uint32_t c = a + (n + 1);
        const std::uint32_t d = c + 1;
        if (inward) {
          mesh.faces.push_back({a, c, b});
          mesh.faces.push_back({b, c, d});
        } else {
          mesh.faces.push_back({a, b, c});
          mesh.faces.push_back({b, d, c});
        }
      }
    }
  }
  // Weld the seams so the box is a closed manifold.
  std::map<std::array<double, 3>, std::uint32_t> index;
  std::vector<std::uint32_t> remap(mesh.vertices.size());
  std::vector<Vec3> unique;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    auto [it, fresh] = index.try_emplace({p.x(), p.y(), p.z()}, static_cast<std::uint32_t>(unique.size()));
    if (fresh) unique.push_back(p);
    remap[i] = it->second;
  }
  for (Face& f : mesh.faces) {
    for (auto& i : f) i = remap[i];
  }
  mesh.vertices = std::move(unique);
  return mesh;
}

TriangleMesh make_grid(int n, double size) {
  TriangleMesh mesh;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      mesh.vertices.emplace_back(size * i / (n - 1), size * j / (n - 1), 0.0);
    }
  }
  for (int j = 0; j + 1 < n; ++j) {
    for (int i = 0; i + 1 < n; ++i) {
      const std::uint32_t a = j * n + i;
      const std::uint32_t b = a + 1;
      const std::uint32_t c = a + n;
      const std::uint32_t d = c + 1;
      mesh.faces.push_back({a, b, d});
      mesh.faces.push_back({a, d, c});
    }
  }
  return mesh;
}

TriangleMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh mesh;
  mesh.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                   {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : mesh.vertices) v.normalize();
  mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
                {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
                {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<EdgeKey, std::uint32_t> midpoints;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      auto [it, fresh] = midpoints.try_emplace(make_edge(a, b), 0u);
      if (fresh) {
        it->second = static_cast<std::uint32_t>(mesh.vertices.size());
        mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
      }
      return it->second;
    };
    std::vector<Face> next;
    next.reserve(mesh.faces.size() * 4);
    for (const Face& f : mesh.faces) {
      const auto ab = midpoint(f[0], f[1]);
      const auto bc = midpoint(f[1], f[2]);
      const auto ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(next);
  }
  for (Vec3& v : mesh.vertices) v *= radius;
  return mesh;
}

}  // namespace proxygs
