#pragma once

#include "proxygs/cluster.hpp"
#include "proxygs/depth_raster.hpp"
#include "proxygs/geometry.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace proxygs {

struct Plane {
  Vec3 normal = Vec3::Zero();  // inward, unit length
  double offset = 0.0;

  double distance(const Vec3& x) const { return normal.dot(x) + offset; }
};

/// Left, right, top, bottom, near, far.
struct FrustumPlanes {
  std::array<Plane, 6> planes;
};

/// Extracts the six planes of P*V with inward normals.
FrustumPlanes extract_frustum(const Camera& camera);

/// Frustum of an arbitrary clip transform (x,y in [-w,w], z in [0,w]).
FrustumPlanes extract_frustum(const Mat4& view_projection);

/// Per cluster: 1 if some plane has all 8 AABB corners strictly outside.
std::vector<std::uint8_t> frustum_cull(const std::vector<Cluster>& clusters, const FrustumPlanes& frustum,
                                       int workers = 0);

struct OcclusionParams {
  int level_bias = ClusterDefaults::level_bias;  // c
  int padding = ClusterDefaults::padding;        // Delta
};

/// Per cluster: 1 if its conservative depth is >= the Hi-Z max over its
/// snapped screen rect. Skipped depths and empty rects are never occluded.
std::vector<std::uint8_t> occlusion_cull_clusters(const std::vector<Cluster>& clusters, const Camera& camera,
                                                  const HiZPyramid& pyramid, const OcclusionParams& params = {},
                                                  int workers = 0);

/// Anchor positions in world units, stored as float32 like the file format.
struct AnchorSet {
  std::vector<std::array<float, 3>> positions;

  std::size_t count() const { return positions.size(); }
  Vec3 at(std::size_t i) const { return {positions[i][0], positions[i][1], positions[i][2]}; }
};

enum class Verdict : std::uint8_t {
  kept = 0,
  culled_near = 1,
  culled_offscreen = 2,
  culled_occluded = 3,
};

struct CullMask {
  std::vector<Verdict> verdicts;
  std::size_t kept_count = 0;

  std::array<std::size_t, 4> histogram() const;
  friend bool operator==(const CullMask&, const CullMask&) = default;
};

inline constexpr double kDefaultGamma = 0.3;

/// Fused projection / bounds / depth test over all anchors.
/// Throws std::invalid_argument if the depth map does not match the viewport.
CullMask cull_anchors(const AnchorSet& anchors, const Camera& camera, const DepthMap& depth, double gamma,
                      const ProjectionParams& params = {}, int workers = 0);

/// The same filter staged through project / ndc_to_pixel / linearize_depth,
/// one anchor at a time.
CullMask cull_anchors_staged(const AnchorSet& anchors, const Camera& camera, const DepthMap& depth, double gamma,
                             const ProjectionParams& params = {});

/// Counts anchors whose occlusion verdict would change if the depth test used
/// clip-space z_h instead of view-space depth.
struct OperandDiagnostic {
  std::size_t tested = 0;        // anchors reaching the depth comparison
  std::size_t view_culled = 0;   // culled with view-space depth (what cull_anchors does)
  std::size_t clip_culled = 0;   // culled with clip-space z_h
  std::size_t disagreements = 0;
};

OperandDiagnostic cull_anchors_operand_diagnostic(const AnchorSet& anchors, const Camera& camera,
                                                  const DepthMap& depth, double gamma,
                                                  const ProjectionParams& params = {});

}  // namespace proxygs
