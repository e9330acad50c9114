#pragma once

#include "proxygs/cluster.hpp"
#include "proxygs/geometry.hpp"
#include "proxygs/mesh.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace proxygs {

/// Row-major H x W hardware depth, row 0 at the top. 1.0 is background.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 1.0f) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

inline constexpr float kBackgroundDepth = 1.0f;

/// Max-reduction mip chain. levels[0] is the base map; each next level has
/// ceil(dim / 2) texels per axis, down to 1 x 1.
struct HiZPyramid {
  std::vector<DepthMap> levels;

  int max_level() const { return static_cast<int>(levels.size()) - 1; }
};

/// Narrows to float, rounding toward +infinity.
float narrow_depth_up(double z);

struct RasterOptions {
  int workers = 0;   // 0 = OpenMP default
  int tile_size = 64;
  bool early_z = true;
};

/// Depth-only rasterization of every face. Keep-minimum depth test,
/// pixel-centre sampling, top-left fill rule, near-plane clipping, fragments
/// beyond the far plane discarded. Output does not depend on face order or
/// worker count.
DepthMap rasterize_depth(const TriangleMesh& mesh, const Camera& camera, const RasterOptions& options = {});

/// Rasterizes only the clusters whose `visible` flag is set. An empty mask
/// draws every cluster.
DepthMap rasterize_clusters(const TriangleMesh& mesh, const std::vector<Cluster>& clusters,
                            const Camera& camera, std::span<const std::uint8_t> visible,
                            const RasterOptions& options = {});

/// Rasterizes an explicit face list.
DepthMap rasterize_faces(const TriangleMesh& mesh, std::span<const std::uint32_t> faces, const Camera& camera,
                         const RasterOptions& options = {});

HiZPyramid build_hiz(const DepthMap& depth, int workers = 0);

/// Max over the texels of `rect` at `level`. The rect must lie inside the level.
float rect_max(const HiZPyramid& pyramid, const LevelRect& rect);

}  // namespace proxygs
