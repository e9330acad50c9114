#pragma once

#include "proxygs/geometry.hpp"

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace proxygs {

using Face = std::array<std::uint32_t, 3>;
using EdgeKey = std::pair<std::uint32_t, std::uint32_t>;  // (min, max)

inline EdgeKey make_edge(std::uint32_t a, std::uint32_t b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  // Filled by annotate_mesh(); empty until then.
  std::vector<bool> boundary_flags;
  std::set<EdgeKey> feature_edges;

  std::size_t face_count() const { return faces.size(); }
  std::size_t vertex_count() const { return vertices.size(); }
};

/// Plane (a,b,c,d) of a face with unit normal (a,b,c) following the face winding.
/// Degenerate faces produce a zero vector.
Vec4 face_plane(const TriangleMesh& mesh, std::size_t face);

Vec3 face_normal(const TriangleMesh& mesh, std::size_t face);

/// Empty string when valid, otherwise every violation, one per line.
std::string mesh_violations(const TriangleMesh& mesh);
void validate_mesh(const TriangleMesh& mesh);

/// Marks open-boundary vertices and edges whose dihedral angle exceeds
/// `feature_angle_deg`.
void annotate_mesh(TriangleMesh& mesh, double feature_angle_deg);

/// Undirected edge -> incident face indices, in ascending face order.
std::vector<std::pair<EdgeKey, std::vector<std::uint32_t>>> edge_faces(const TriangleMesh& mesh);

/// Axis-aligned bounds of all vertices.
std::pair<Vec3, Vec3> mesh_bounds(const TriangleMesh& mesh);

// Procedural meshes used by the generator and the tests.

/// Unit cube [0,1]^3, outward winding, 12 faces.
TriangleMesh unit_cube();

/// Axis-aligned box; each face split into subdiv x subdiv quads. Outward winding
/// unless `inward` is set.
TriangleMesh make_box(const Vec3& lo, const Vec3& hi, int subdiv = 1, bool inward = false);

/// Regular (n x n)-vertex grid over [0,size]^2 in the z = 0 plane.
TriangleMesh make_grid(int n, double size);

/// Icosphere: 20 * 4^subdivisions faces, radius `radius`.
TriangleMesh make_icosphere(int subdivisions, double radius = 1.0);

/// Appends `other` to `mesh` (reindexing faces).
void append_mesh(TriangleMesh& mesh, const TriangleMesh& other);

}  // namespace proxygs
