#include "proxygs/cluster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace proxygs {

namespace {

std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0x1fffff;
  v = (v | v << 32) & 0x1f00000000ffffULL;
  v = (v | v << 16) & 0x1f0000ff0000ffULL;
  v = (v | v << 8) & 0x100f00f00f00f00fULL;
  v = (v | v << 4) & 0x10c30c30c30c30c3ULL;
  v = (v | v << 2) & 0x1249249249249249ULL;
  return v;
}

}  // namespace

std::array<Vec3, 8> Cluster::corners() const {
  std::array<Vec3, 8> c;
  for (int k = 0; k < 8; ++k) {
    c[k] = Vec3((k & 1) ? aabb_max.x() : aabb_min.x(), (k & 2) ? aabb_max.y() : aabb_min.y(),
                (k & 4) ? aabb_max.z() : aabb_min.z());
  }
  return c;
}

std::uint64_t morton_code(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  std::uint64_t code = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const double extent = hi[axis] - lo[axis];
    double t = extent > 0.0 ? (p[axis] - lo[axis]) / extent : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const auto q = static_cast<std::uint64_t>(t * 2097151.0);
    code |= spread_bits(q) << axis;
  }
  return code;
}

void compute_cluster_bounds(const TriangleMesh& mesh, std::vector<Cluster>& clusters) {
  for (Cluster& c : clusters) {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (auto f : c.triangle_indices) {
      for (auto v : mesh.faces[f]) {
        lo = lo.cwiseMin(mesh.vertices[v]);
        hi = hi.cwiseMax(mesh.vertices[v]);
      }
    }
    c.aabb_min = lo;
    c.aabb_max = hi;
  }
}

std::vector<Cluster> build_clusters(const TriangleMesh& mesh, int tau_min, int tau_max) {
  if (tau_min < 1 || tau_min > tau_max) {
    throw std::invalid_argument("build_clusters: need 1 <= tau_min <= tau_max");
  }
  const auto [lo, hi] = mesh_bounds(mesh);
  std::vector<std::uint64_t> codes(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const Vec3 centroid = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    codes[f] = morton_code(centroid, lo, hi);
  }
  std::vector<std::uint32_t> order(mesh.faces.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return codes[a] < codes[b]; });

  std::vector<Cluster> clusters;
  for (std::size_t start = 0; start < order.size(); start += tau_max) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tau_max));
    Cluster c;
    c.triangle_indices.assign(order.begin() + start, order.begin() + end);
    clusters.push_back(std::move(c));
  }
  compute_cluster_bounds(mesh, clusters);
  return clusters;
}

ScreenRect screen_rect(const Cluster& cluster, const Camera& camera, int padding) {
  double sx_min = std::numeric_limits<double>::infinity();
  double sy_min = sx_min;
  double sx_max = -sx_min;
  double sy_max = -sx_min;
  int behind = 0;
  for (const Vec3& x : cluster.corners()) {
    const Vec4 view = transform_point(camera.view, x.x(), x.y(), x.z(), 1.0);
    const Vec4 clip = transform_point(camera.proj, view.x(), view.y(), view.z(), view.w());
    if (clip.w() <= 0.0) {
      ++behind;
      continue;
    }
    const double sx = 0.5 * camera.width * (clip.x() / clip.w() + 1.0);
    const double sy = 0.5 * camera.height * (clip.y() / clip.w() + 1.0);
    sx_min = std::min(sx_min, sx);
    sx_max = std::max(sx_max, sx);
    sy_min = std::min(sy_min, sy);
    sy_max = std::max(sy_max, sy);
  }
  ScreenRect r;
  if (behind == 8) return r;
  if (behind > 0) {
    r = {0, 0, camera.width - 1, camera.height - 1, false};
    return r;
  }
  // Work in doubles until clipped; projected corners can be far off screen.
  const double x0 = std::max(std::floor(sx_min) - padding, 0.0);
  const double y0 = std::max(std::floor(sy_min) - padding, 0.0);
  const double x1 = std::min(std::ceil(sx_max) + padding, camera.width - 1.0);
  const double y1 = std::min(std::ceil(sy_max) + padding, camera.height - 1.0);
  if (!(x0 <= x1) || !(y0 <= y1)) return r;
  r.x_min = static_cast<int>(x0);
  r.y_min = static_cast<int>(y0);
  r.x_max = static_cast<int>(x1);
  r.y_max = static_cast<int>(y1);
  r.empty = false;
  return r;
}

LevelRect snap_level(const ScreenRect& rect, int c, int max_level) {
  const int extent = std::max(rect.width(), rect.height());
  const int log2_extent = extent > 0 ? std::bit_width(static_cast<unsigned>(extent)) - 1 : 0;
  LevelRect out;
  out.level = std::clamp(log2_extent - c, 0, std::max(max_level, 0));
  const int scale = 1 << out.level;
  out.x0 = rect.x_min / scale;
  out.y0 = rect.y_min / scale;
  // Exclusive upper edge: ceil((max + 1) / 2^level).
  out.x1 = (rect.x_max + 1 + scale - 1) / scale;
  out.y1 = (rect.y_max + 1 + scale - 1) / scale;
  return out;
}

std::optional<double> conservative_depth(const Cluster& cluster, const Camera& camera) {
  constexpr double z_ndc_near = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (const Vec3& x : cluster.corners()) {
    const Vec4 view = transform_point(camera.view, x.x(), x.y(), x.z(), 1.0);
    const Vec4 clip = transform_point(camera.proj, view.x(), view.y(), view.z(), view.w());
    if (clip.w() <= 0.0 || clip.z() < 0.0) return std::nullopt;
    best = std::min(best, std::max(z_ndc_near, clip.z() / clip.w()));
  }
  return best;
}

}  // namespace proxygs
