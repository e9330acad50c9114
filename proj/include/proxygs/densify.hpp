#pragma once

#include "proxygs/depth_raster.hpp"
#include "proxygs/geometry.hpp"

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace proxygs {

/// Per-pixel loss, row-major, row 0 at the top.
struct ErrorImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  ErrorImage() = default;
  ErrorImage(int w, int h, float fill = 0.0f) : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct PatchGrid {
  int patch_size = 16;
  int image_width = 0;
  int image_height = 0;
  int cols = 0;  // ceil(W / patch_size)
  int rows = 0;
  std::vector<double> patch_mean;       // row-major, rows x cols
  double frame_mean = 0.0;              // mean of patch_mean
  std::vector<std::uint8_t> selected;   // patch_mean > 3 * frame_mean

  double threshold() const { return 3.0 * frame_mean; }

  /// Pixel extent [x0, x1) x [y0, y1) of patch (col, row).
  std::array<int, 4> extent(int col, int row) const;
};

inline constexpr int kDefaultPatchSize = 16;

/// Tiles the image into patch_size squares (partial patches at the right and
/// bottom edges average over their actual pixels) and selects the patches
/// whose mean exceeds three times the frame mean.
/// Throws std::invalid_argument if patch_size < 1 or exceeds the image.
PatchGrid select_patches(const ErrorImage& error, int patch_size, int workers = 0);

struct CellHash {
  std::size_t operator()(const std::array<std::int64_t, 3>& c) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::int64_t v : c) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

/// Capacity-limited voxel occupancy.
struct ProxyGrid {
  Vec3 origin = Vec3::Zero();  // b_min
  double cell_size = 1.0;      // h
  std::uint32_t capacity = 4;  // K
  std::unordered_map<std::array<std::int64_t, 3>, std::uint32_t, CellHash> occupancy;

  std::array<std::int64_t, 3> cell_of(const Vec3& p) const;
  std::uint32_t count(const std::array<std::int64_t, 3>& cell) const;
};

inline constexpr std::uint32_t kDefaultCapacity = 4;

/// Grid over the proxy AABB with h = diagonal / 512 and K = 4.
ProxyGrid default_proxy_grid(const Vec3& bounds_min, const Vec3& bounds_max);

/// Admits `position` iff its cell holds fewer than K anchors.
/// Throws std::invalid_argument if the grid has a non-positive cell size.
bool grid_insert(ProxyGrid& grid, const Vec3& position);

struct PlannedAnchor {
  std::array<float, 3> position;
  std::uint32_t frame_id = 0;
  std::int32_t patch_col = 0;
  std::int32_t patch_row = 0;
  std::int32_t pixel_x = 0;
  std::int32_t pixel_y = 0;
};

struct DensificationPlan {
  std::vector<PlannedAnchor> anchors;
  std::size_t rejected_count = 0;    // capacity rejections
  std::size_t background_skipped = 0;
};

/// Representative pixel of a patch: the centre of its actual extent.
std::array<int, 2> patch_center(const PatchGrid& patches, int col, int row);

/// Back-projects the centre pixel of every selected patch (row-major) onto the
/// proxy depth and admits it through `grid`. Background centres are skipped.
/// Throws std::invalid_argument on mismatched dimensions.
DensificationPlan plan_anchors(const PatchGrid& patches, const DepthMap& depth, const Camera& camera,
                               ProxyGrid& grid, std::uint32_t frame_id = 0);

}  // namespace proxygs
