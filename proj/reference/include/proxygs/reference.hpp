#pragma once

// Brute-force and scalar reference implementations. They share only data
// types with the library and are used to check it.

#include "proxygs/densify.hpp"
#include "proxygs/depth_raster.hpp"
#include "proxygs/geometry.hpp"
#include "proxygs/mesh.hpp"
#include "proxygs/scene.hpp"
#include "proxygs/simplify.hpp"
#include "proxygs/visibility.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace proxygs::ref {

/// Plain-array copy of a camera.
struct ScalarCamera {
  double view[4][4];
  double proj[4][4];
  double rotation[3][3];
  double center[3];
  double k[3][3];
  double near, far;
  int width, height;
};

ScalarCamera scalar_camera(const Camera& camera);

/// out = m * in, accumulated column by column from zero.
void mat4_apply(const double m[4][4], const double in[4], double out[4]);

/// Per-anchor filter written directly from the formulas, one anchor at a time.
CullMask cull_anchors(const AnchorSet& anchors, const Camera& camera, const DepthMap& depth, double gamma,
                      const ProjectionParams& params = {});

/// o + R^T (d * K^-1 [u v 1]) with K^-1 from the adjugate.
Vec3 back_project(const Camera& camera, double u, double v, double depth_linear);

/// Hardware depth of a view-space depth, from the projection definition.
double hardware_depth(double view_depth, double near, double far);

/// Moller-Trumbore; returns the ray parameter of the hit, if any (either facing).
std::optional<double> ray_triangle(const double origin[3], const double dir[3], const Vec3& a, const Vec3& b,
                                   const Vec3& c);

struct RayCast {
  DepthMap depth;                   // hardware depth, rounded to nearest float
  std::vector<double> exact_depth;  // hardware depth before narrowing; 1.0 where empty
  std::vector<std::int64_t> face;   // nearest face per pixel, -1 where empty
};

/// Casts the ray through every pixel centre against every listed face and
/// keeps the nearest hit whose view depth lies in [near, far].
RayCast raycast(const TriangleMesh& mesh, std::span<const std::uint32_t> faces, const Camera& camera);
RayCast raycast(const TriangleMesh& mesh, const Camera& camera);

/// Same camera at a resolution whose larger side is at most `max_dim`.
Camera reduced_camera(const Camera& camera, int max_dim);

/// Max of level-0 pixels inside [x0,x1) x [y0,y1) (clipped to the map).
float region_max(const DepthMap& depth, int x0, int y0, int x1, int y1);

/// Every texel of every level equals the max over its level-0 footprint.
/// Returns a description of the first failing texel.
std::optional<std::string> check_hiz_footprints(const HiZPyramid& pyramid);

/// Closest-point distance from p to triangle abc.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh);

struct GridMinimum {
  Vec3 position;
  double cost;
};

/// Evaluates the quadric at n^3 points spanning [lo, hi].
GridMinimum grid_minimize(const Quadric& q, const Vec3& lo, const Vec3& hi, int n);

struct PatchSelection {
  std::vector<double> means;
  double frame_mean = 0.0;
  std::vector<std::uint8_t> selected;
};

PatchSelection select_patches(const ErrorImage& error, int patch_size);

/// Naive plan: row-major patches, an ordered map for the grid.
DensificationPlan plan_anchors(const PatchSelection& patches, int patch_size, const DepthMap& depth,
                               const Camera& camera, const Vec3& origin, double cell_size, std::uint32_t capacity,
                               std::uint32_t frame_id = 0);

/// Per cluster: 1 if some pixel's nearest ray hit belongs to one of its faces.
std::vector<std::uint8_t> clusters_with_visible_fragments(const TriangleMesh& mesh,
                                                          const std::vector<Cluster>& clusters,
                                                          const Camera& camera);

// ---------------------------------------------------------------- suite

struct OracleOptions {
  std::size_t max_triangles = 1000;  // ray-cast and cluster oracles
  int max_resolution = 128;          // ray-cast camera size
  /// Replaces the depth map the fast anchor filter runs on, to check that
  /// the anchor oracle notices.
  std::optional<DepthMap> injected_depth;
  int workers = 0;
};

struct OracleResult {
  std::string name;
  bool passed = true;
  bool skipped = false;
  std::size_t checked = 0;
  std::string detail;  // first counterexample, or why it was skipped
};

struct OracleReport {
  std::vector<OracleResult> results;

  bool all_passed() const;
  const OracleResult* find(const std::string& name) const;
  io::json to_json() const;
};

/// Runs every oracle for one camera of the bundle. Never throws for oracle
/// failures; they are part of the report.
OracleReport oracle_suite(const SceneBundle& bundle, std::size_t camera_index, const OracleOptions& options = {});

}  // namespace proxygs::ref
