#pragma once

#include "proxygs/geometry.hpp"
#include "proxygs/mesh.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace proxygs {

struct Cluster {
  std::vector<std::uint32_t> triangle_indices;
  Vec3 aabb_min = Vec3::Zero();
  Vec3 aabb_max = Vec3::Zero();

  std::array<Vec3, 8> corners() const;
};

/// Inclusive pixel rectangle at level 0.
struct ScreenRect {
  int x_min = 0;
  int y_min = 0;
  int x_max = -1;
  int y_max = -1;
  bool empty = true;

  int width() const { return empty ? 0 : x_max - x_min + 1; }
  int height() const { return empty ? 0 : y_max - y_min + 1; }
};

/// Texel rectangle at a pyramid level: [x0, x1) x [y0, y1).
struct LevelRect {
  int level = 0;
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
};

struct ClusterDefaults {
  static constexpr int tau_min = 32;
  static constexpr int tau_max = 128;
  static constexpr int padding = 1;
  static constexpr int level_bias = 1;  // c
};

/// Sorts faces by the Morton code of their centroid and cuts the order into
/// runs of tau_max. Only the last cluster may fall below tau_min.
std::vector<Cluster> build_clusters(const TriangleMesh& mesh, int tau_min, int tau_max);

/// Recomputes every cluster AABB from the mesh.
void compute_cluster_bounds(const TriangleMesh& mesh, std::vector<Cluster>& clusters);

/// Projects the 8 AABB corners, takes the outward-rounded box padded by
/// `padding` pixels and clips it to the viewport. If some corners are behind
/// the camera plane the box covers the whole screen; if all are, it is empty.
ScreenRect screen_rect(const Cluster& cluster, const Camera& camera, int padding);

/// Picks level clamp(floor(log2(max(w,h))) - c, 0, max_level) and snaps the
/// rect outward onto that level's texel grid.
LevelRect snap_level(const ScreenRect& rect, int c, int max_level);

/// Conservative nearest NDC depth of the AABB, or nullopt ("skip") when any
/// corner is behind the camera plane or in front of the near plane.
std::optional<double> conservative_depth(const Cluster& cluster, const Camera& camera);

/// 63-bit Morton code of a point quantised to 21 bits per axis inside [lo, hi].
std::uint64_t morton_code(const Vec3& p, const Vec3& lo, const Vec3& hi);

}  // namespace proxygs
