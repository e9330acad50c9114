#pragma once

#include "proxygs/mesh.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace proxygs {

/// Symmetric 4x4 quadric. E(x) = [x;1]^T Q [x;1] is a weighted sum of squared
/// plane distances.
struct Quadric {
  Mat4 matrix = Mat4::Zero();

  static Quadric from_plane(const Vec4& plane, double weight = 1.0) {
    const Mat4 outer = plane * plane.transpose();
    return Quadric{outer * weight};
  }
  Quadric& operator+=(const Quadric& o) {
    matrix += o.matrix;
    return *this;
  }
  friend Quadric operator+(Quadric a, const Quadric& b) { return a += b; }

  double error(const Vec3& x) const {
    const Vec4 h(x.x(), x.y(), x.z(), 1.0);
    return h.dot(matrix * h);
  }
};

struct CollapseCandidate {
  std::uint32_t keep = 0;    // i
  std::uint32_t remove = 0;  // j
  Vec3 optimal_position = Vec3::Zero();
  double cost = 0.0;
  std::uint64_t generation = 0;
};

/// A is treated as invertible iff its smallest singular value exceeds this
/// fraction of its largest.
inline constexpr double kSingularRatio = 1e-10;

struct SimplifyOptions {
  std::size_t target_faces = 4;
  double boundary_weight = 1e3;    // lambda_b
  double feature_angle_deg = 40.0;
};

/// Per-vertex quadrics: sum of incident face planes plus weighted constraint
/// planes on boundary and feature edges. Boundary edges are found from the
/// faces; feature edges come from annotate_mesh().
std::vector<Quadric> vertex_quadrics(const TriangleMesh& mesh, double boundary_weight, int workers = 0);

/// Optimal contraction of an edge with endpoint quadrics q_i, q_j. Falls back
/// to {midpoint, x_i, x_j} (first wins ties) when A is singular.
CollapseCandidate optimal_collapse(const Quadric& q_i, const Quadric& q_j, const Vec3& x_i, const Vec3& x_j);

struct SimplifyResult {
  TriangleMesh mesh;
  std::size_t collapses = 0;
  // Set when the queue ran out before reaching the target face count.
  bool exhausted = false;
};

/// Incremental edge-collapse simplifier. `simplify()` drives it to a target;
/// the step interface exists for inspection.
class Simplifier {
 public:
  Simplifier(const TriangleMesh& mesh, const SimplifyOptions& options);
  ~Simplifier();
  Simplifier(Simplifier&&) noexcept;
  Simplifier& operator=(Simplifier&&) noexcept;

  /// Pops the cheapest valid collapse and applies it. Returns nullopt when no
  /// valid collapse remains.
  std::optional<CollapseCandidate> collapse_next();

  /// Every currently valid collapse, found by scanning all live edges.
  std::vector<CollapseCandidate> valid_candidates() const;

  std::size_t face_count() const;
  std::size_t vertex_count() const;

  /// Quadric error of the current vertex positions under their current quadrics.
  double total_error() const;

  /// Compacted mesh of live vertices and faces.
  TriangleMesh mesh() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// Collapses the cheapest valid edge until face_count <= target_faces or no
/// valid collapse remains (reported via `exhausted`).
SimplifyResult simplify(const TriangleMesh& mesh, const SimplifyOptions& options);

}  // namespace proxygs
