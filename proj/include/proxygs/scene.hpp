#pragma once

#include "proxygs/cluster.hpp"
#include "proxygs/densify.hpp"
#include "proxygs/depth_raster.hpp"
#include "proxygs/geometry.hpp"
#include "proxygs/io.hpp"
#include "proxygs/mesh.hpp"
#include "proxygs/visibility.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace proxygs {

/// Every tunable constant of the pipeline.
struct Config {
  double gamma = kDefaultGamma;
  double tau_near = 1e-4;
  double epsilon = 1e-7;
  int padding = 1;     // Delta
  int level_c = 1;     // c
  int patch_size = 16;
  std::uint32_t capacity = 4;  // K
  double cell_size = 0.0;      // h; 0 = proxy AABB diagonal / 512
  double lambda_b = 1e3;
  double feature_angle_deg = 40.0;
  int tau_min = 32;
  int tau_max = 128;

  ProjectionParams projection() const { return {epsilon, tau_near}; }

  /// Empty when valid, otherwise one line per violated constraint.
  std::string violations() const;

  /// Starts from `base` and overrides the keys present in `j`. Unknown keys
  /// and wrong types throw std::invalid_argument naming the key.
  static Config from_json(const io::json& j, const Config& base);
  static Config from_json(const io::json& j);
  io::json to_json() const;
};

struct SceneBundle {
  TriangleMesh proxy_mesh;
  std::vector<Cluster> clusters;
  std::vector<Camera> cameras;
  AnchorSet anchors;
  Config config;
};

/// Load failure listing every problem found, one per line.
class SceneError : public std::runtime_error {
 public:
  explicit SceneError(const std::string& what) : std::runtime_error(what) {}
};

/// Reads a scene manifest (JSON with keys mesh, clusters, cameras, anchors,
/// config; paths relative to the manifest). A missing cluster file means the
/// clusters are built from the config. `config_override` replaces the
/// manifest's config. Throws SceneError.
SceneBundle load_scene(const std::filesystem::path& manifest,
                       const std::optional<Config>& config_override = std::nullopt);

/// Writes scene.json plus proxy.ply, proxy.clusters, cameras.json and
/// anchors.bin into `dir`. Returns the manifest path.
std::filesystem::path save_scene(const SceneBundle& bundle, const std::filesystem::path& dir);

/// Densification grid over the proxy AABB using the config's cell size and
/// capacity (cell size 0 picks diagonal / 512).
ProxyGrid make_proxy_grid(const TriangleMesh& proxy, const Config& config);

/// Exhaustive invariant check; empty when valid.
std::string bundle_violations(const SceneBundle& bundle);

struct SyntheticSpec {
  double extent = 200.0;            // street length, world units
  int box_count = 50;
  std::size_t anchor_count = 100000;
  int camera_count = 4;
  int width = 1000;
  int height = 1000;
  int box_subdiv = 1;               // quads per box face side
  int ground_subdiv = 4;            // ground grid cells per side
};

/// Deterministic box-world street: a ground plane along +z, buildings on
/// both sides, anchors half near surfaces and half in the air volume,
/// cameras at eye height looking down the street.
/// Throws std::invalid_argument for negative counts or a zero camera count.
SceneBundle generate_synthetic_scene(std::uint64_t seed, const SyntheticSpec& spec, const Config& config = {});

struct FrameStats {
  double depth_ms = 0.0;   // frustum test, rasterization, Hi-Z, occlusion test
  double filter_ms = 0.0;  // anchor filter
  double total_ms = 0.0;
  std::size_t anchors_in = 0;
  std::size_t anchors_kept = 0;
  std::size_t clusters_drawn = 0;
  std::size_t clusters_frustum_culled = 0;
  std::size_t clusters_occlusion_culled = 0;
};

struct PipelineResult {
  DepthMap depth;
  HiZPyramid pyramid;
  CullMask mask;
  std::vector<std::uint8_t> frustum_culled;
  std::vector<std::uint8_t> occluded;
  FrameStats stats;
};

/// One frame: frustum-cull clusters, rasterize the survivors, build Hi-Z,
/// run the cluster occlusion test and filter the anchors against the depth.
/// Clusters that pass the frustum test but fail the occlusion test are
/// counted as occlusion-culled; the rest are counted as drawn.
PipelineResult run_pipeline(const SceneBundle& bundle, std::size_t camera_index, int workers = 0);

}  // namespace proxygs
