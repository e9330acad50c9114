#include "proxygs/densify.hpp"

#include "proxygs/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace proxygs {

std::array<int, 4> PatchGrid::extent(int col, int row) const {
  const int x0 = col * patch_size;
  const int y0 = row * patch_size;
  return {x0, y0, std::min(x0 + patch_size, image_width), std::min(y0 + patch_size, image_height)};
}

PatchGrid select_patches(const ErrorImage& error, int patch_size, int workers) {
  if (patch_size < 1) throw std::invalid_argument("select_patches: patch_size must be >= 1");
  if (error.width < patch_size || error.height < patch_size) {
    throw std::invalid_argument("select_patches: image " + std::to_string(error.width) + "x" +
                                std::to_string(error.height) + " is smaller than patch size " +
                                std::to_string(patch_size));
  }
  PatchGrid g;
  g.patch_size = patch_size;
  g.image_width = error.width;
  g.image_height = error.height;
  g.cols = (error.width + patch_size - 1) / patch_size;
  g.rows = (error.height + patch_size - 1) / patch_size;
  const auto n = static_cast<std::int64_t>(g.cols) * g.rows;
  g.patch_mean.assign(static_cast<std::size_t>(n), 0.0);
  g.selected.assign(static_cast<std::size_t>(n), 0);

  const int threads = resolve_workers(workers);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t p = 0; p < n; ++p) {
    const auto [x0, y0, x1, y1] = g.extent(static_cast<int>(p % g.cols), static_cast<int>(p / g.cols));
    double sum = 0.0;
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) sum += error.at(x, y);
    }
    g.patch_mean[p] = sum / (static_cast<double>(x1 - x0) * (y1 - y0));
  }

  double total = 0.0;
  for (double m : g.patch_mean) total += m;
  g.frame_mean = total / static_cast<double>(n);
  const double tau = g.threshold();
  for (std::int64_t p = 0; p < n; ++p) g.selected[p] = g.patch_mean[p] > tau ? 1 : 0;
  return g;
}

std::array<std::int64_t, 3> ProxyGrid::cell_of(const Vec3& p) const {
  std::array<std::int64_t, 3> c;
  for (int k = 0; k < 3; ++k) c[k] = static_cast<std::int64_t>(std::floor((p[k] - origin[k]) / cell_size));
  return c;
}

std::uint32_t ProxyGrid::count(const std::array<std::int64_t, 3>& cell) const {
  const auto it = occupancy.find(cell);
  return it == occupancy.end() ? 0u : it->second;
}

ProxyGrid default_proxy_grid(const Vec3& bounds_min, const Vec3& bounds_max) {
  ProxyGrid g;
  g.origin = bounds_min;
  const double diag = (bounds_max - bounds_min).norm();
  g.cell_size = diag > 0.0 ? diag / 512.0 : 1.0;
  g.capacity = kDefaultCapacity;
  return g;
}

bool grid_insert(ProxyGrid& grid, const Vec3& position) {
  if (!(grid.cell_size > 0.0)) throw std::invalid_argument("grid_insert: cell_size must be positive");
  std::uint32_t& count = grid.occupancy[grid.cell_of(position)];
  if (count >= grid.capacity) return false;
  ++count;
  return true;
}

std::array<int, 2> patch_center(const PatchGrid& patches, int col, int row) {
  const auto [x0, y0, x1, y1] = patches.extent(col, row);
  return {x0 + (x1 - x0) / 2, y0 + (y1 - y0) / 2};
}

DensificationPlan plan_anchors(const PatchGrid& patches, const DepthMap& depth, const Camera& camera,
                               ProxyGrid& grid, std::uint32_t frame_id) {
  if (depth.width != camera.width || depth.height != camera.height || patches.image_width != camera.width ||
      patches.image_height != camera.height) {
    throw std::invalid_argument("plan_anchors: error image " + std::to_string(patches.image_width) + "x" +
                                std::to_string(patches.image_height) + ", depth " + std::to_string(depth.width) +
                                "x" + std::to_string(depth.height) + " and camera " +
                                std::to_string(camera.width) + "x" + std::to_string(camera.height) +
                                " must agree");
  }
  DensificationPlan plan;
  for (int row = 0; row < patches.rows; ++row) {
    for (int col = 0; col < patches.cols; ++col) {
      if (!patches.selected[static_cast<std::size_t>(row) * patches.cols + col]) continue;
      const auto [u, v] = patch_center(patches, col, row);
      const float z_hw = depth.at(u, v);
      if (z_hw == kBackgroundDepth) {
        ++plan.background_skipped;
        continue;
      }
      const double d = linearize_depth(z_hw, camera.near, camera.far);
      const Vec3 p = back_project(camera, u, v, d);
      if (!grid_insert(grid, p)) {
        ++plan.rejected_count;
        continue;
      }
      PlannedAnchor a;
      a.position = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())};
      a.frame_id = frame_id;
      a.patch_col = col;
      a.patch_row = row;
      a.pixel_x = u;
      a.pixel_y = v;
      plan.anchors.push_back(a);
    }
  }
  return plan;
}

}  // namespace proxygs
