#include "proxygs/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace proxygs::ref {

ScalarCamera scalar_camera(const Camera& c) {
  ScalarCamera s{};
  for (int r = 0; r < 4; ++r) {
    for (int k = 0; k < 4; ++k) {
      s.view[r][k] = c.view(r, k);
      s.proj[r][k] = c.proj(r, k);
    }
  }
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) {
      s.rotation[r][k] = c.rotation(r, k);
      s.k[r][k] = c.intrinsics(r, k);
    }
    s.center[r] = c.center[r];
  }
  s.near = c.near;
  s.far = c.far;
  s.width = c.width;
  s.height = c.height;
  return s;
}

void mat4_apply(const double m[4][4], const double in[4], double out[4]) {
  for (int r = 0; r < 4; ++r) {
    double acc = m[r][0] * in[0];
    for (int k = 1; k < 4; ++k) acc += m[r][k] * in[k];
    out[r] = acc;
  }
}

CullMask cull_anchors(const AnchorSet& anchors, const Camera& camera, const DepthMap& depth, double gamma,
                      const ProjectionParams& params) {
  const ScalarCamera c = scalar_camera(camera);
  CullMask mask;
  for (const auto& a : anchors.positions) {
    const double p[4] = {a[0], a[1], a[2], 1.0};
    double view[4];
    double clip[4];
    mat4_apply(c.view, p, view);
    mat4_apply(c.proj, view, clip);
    Verdict verdict;
    if (clip[3] <= params.tau_near) {
      verdict = Verdict::culled_near;
    } else {
      const double x_ndc = clip[0] / (clip[3] + params.epsilon);
      const double y_ndc = clip[1] / (clip[3] + params.epsilon);
      const double x = std::floor((x_ndc + 1.0) / 2.0 * c.width);
      const double y = std::floor((y_ndc + 1.0) / 2.0 * c.height);
      if (x < 0.0 || y < 0.0 || x >= c.width || y >= c.height) {
        verdict = Verdict::culled_offscreen;
      } else {
        const float z = depth.values[static_cast<std::size_t>(y) * c.width + static_cast<std::size_t>(x)];
        if (z == 1.0f) {
          verdict = Verdict::kept;
        } else {
          const double linear = c.near * c.far / (c.far - z * (c.far - c.near));
          verdict = view[2] > linear + gamma ? Verdict::culled_occluded : Verdict::kept;
        }
      }
    }
    mask.verdicts.push_back(verdict);
    mask.kept_count += verdict == Verdict::kept;
  }
  return mask;
}

namespace {

// Inverse through the adjugate; returns false when the determinant is zero.
bool invert3(const double m[3][3], double out[3][3]) {
  const double c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
  const double c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
  const double c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
  const double det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
  if (det == 0.0) return false;
  out[0][0] = c00 / det;
  out[1][0] = c01 / det;
  out[2][0] = c02 / det;
  out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return true;
}

void pixel_ray(const ScalarCamera& c, const double kinv[3][3], double u, double v, double dir[3]) {
  const double q[3] = {u, v, 1.0};
  double cam[3];
  for (int r = 0; r < 3; ++r) cam[r] = kinv[r][0] * q[0] + kinv[r][1] * q[1] + kinv[r][2] * q[2];
  // R^T * cam
  for (int r = 0; r < 3; ++r) {
    dir[r] = c.rotation[0][r] * cam[0] + c.rotation[1][r] * cam[1] + c.rotation[2][r] * cam[2];
  }
}

}  // namespace

Vec3 back_project(const Camera& camera, double u, double v, double depth_linear) {
  const ScalarCamera c = scalar_camera(camera);
  double kinv[3][3];
  if (!invert3(c.k, kinv)) throw std::domain_error("singular intrinsics");
  double dir[3];
  pixel_ray(c, kinv, u, v, dir);
  return {c.center[0] + depth_linear * dir[0], c.center[1] + depth_linear * dir[1],
          c.center[2] + depth_linear * dir[2]};
}

double hardware_depth(double d, double n, double f) {
  // z_clip = f/(f-n) d - n f/(f-n), w = d.
  return (f / (f - n) * d - n * f / (f - n)) / d;
}

std::optional<double> ray_triangle(const double o[3], const double d[3], const Vec3& a, const Vec3& b,
                                   const Vec3& c) {
  const double e1[3] = {b.x() - a.x(), b.y() - a.y(), b.z() - a.z()};
  const double e2[3] = {c.x() - a.x(), c.y() - a.y(), c.z() - a.z()};
  const double p[3] = {d[1] * e2[2] - d[2] * e2[1], d[2] * e2[0] - d[0] * e2[2], d[0] * e2[1] - d[1] * e2[0]};
  const double det = e1[0] * p[0] + e1[1] * p[1] + e1[2] * p[2];
  if (det == 0.0) return std::nullopt;
  const double inv = 1.0 / det;
  const double s[3] = {o[0] - a.x(), o[1] - a.y(), o[2] - a.z()};
  const double u = (s[0] * p[0] + s[1] * p[1] + s[2] * p[2]) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const double q[3] = {s[1] * e1[2] - s[2] * e1[1], s[2] * e1[0] - s[0] * e1[2], s[0] * e1[1] - s[1] * e1[0]};
  const double v = (d[0] * q[0] + d[1] * q[1] + d[2] * q[2]) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return (e2[0] * q[0] + e2[1] * q[1] + e2[2] * q[2]) * inv;
}

RayCast raycast(const TriangleMesh& mesh, std::span<const std::uint32_t> faces, const Camera& camera) {
  const ScalarCamera c = scalar_camera(camera);
  double kinv[3][3];
  if (!invert3(c.k, kinv)) throw std::domain_error("singular intrinsics");
  RayCast out;
  out.depth = DepthMap(c.width, c.height, 1.0f);
  const std::size_t n = static_cast<std::size_t>(c.width) * c.height;
  out.exact_depth.assign(n, 1.0);
  out.face.assign(n, -1);
#pragma omp parallel for schedule(dynamic, 1)
  for (int v = 0; v < c.height; ++v) {
    for (int u = 0; u < c.width; ++u) {
      double dir[3];
      pixel_ray(c, kinv, u, v, dir);
      // View depth of o + t*dir is t * (K^-1 [u v 1]).z, which is t for a pinhole K.
      double best = std::numeric_limits<double>::infinity();
      std::int64_t best_face = -1;
      for (auto f : faces) {
        const Face& t = mesh.faces[f];
        const auto hit = ray_triangle(c.center, dir, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
        if (!hit) continue;
        const double depth = *hit * (kinv[2][0] * u + kinv[2][1] * v + kinv[2][2]);
        if (depth < c.near || depth > c.far) continue;
        if (depth < best) {
          best = depth;
          best_face = f;
        }
      }
      const std::size_t i = static_cast<std::size_t>(v) * c.width + u;
      if (best_face >= 0) {
        out.exact_depth[i] = hardware_depth(best, c.near, c.far);
        out.depth.values[i] = static_cast<float>(out.exact_depth[i]);
        out.face[i] = best_face;
      }
    }
  }
  return out;
}

RayCast raycast(const TriangleMesh& mesh, const Camera& camera) {
  std::vector<std::uint32_t> all(mesh.faces.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
  return raycast(mesh, all, camera);
}

Camera reduced_camera(const Camera& camera, int max_dim) {
  const int big = std::max(camera.width, camera.height);
  if (big <= max_dim) return camera;
  const double s = static_cast<double>(max_dim) / big;
  const int w = std::max(1, static_cast<int>(std::lround(camera.width * s)));
  const int h = std::max(1, static_cast<int>(std::lround(camera.height * s)));
  const double sx = static_cast<double>(w) / camera.width;
  const double sy = static_cast<double>(h) / camera.height;
  Mat3 k = camera.intrinsics;
  // Scale about the pixel-edge origin: pixel centres sit at integer coordinates.
  k(0, 0) *= sx;
  k(0, 1) *= sx;
  k(0, 2) = (k(0, 2) + 0.5) * sx - 0.5;
  k(1, 1) *= sy;
  k(1, 2) = (k(1, 2) + 0.5) * sy - 0.5;
  return Camera::from_intrinsics(camera.rotation, camera.center, k, camera.near, camera.far, w, h);
}

float region_max(const DepthMap& depth, int x0, int y0, int x1, int y1) {
  x1 = std::min(x1, depth.width);
  y1 = std::min(y1, depth.height);
  float m = 0.0f;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m = std::max(m, depth.values[static_cast<std::size_t>(y) * depth.width + x]);
  }
  return m;
}

std::optional<std::string> check_hiz_footprints(const HiZPyramid& pyramid) {
  if (pyramid.levels.empty()) return "pyramid has no levels";
  const DepthMap& base = pyramid.levels[0];
  for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
    const DepthMap& level = pyramid.levels[l];
    const long long scale = 1LL << l;
    const int want_w = static_cast<int>((base.width + scale - 1) / scale);
    const int want_h = static_cast<int>((base.height + scale - 1) / scale);
    if (level.width != want_w || level.height != want_h) {
      std::ostringstream s;
      s << "level " << l << " is " << level.width << "x" << level.height << ", expected " << want_w << "x" << want_h;
      return s.str();
    }
    for (int y = 0; y < level.height; ++y) {
      for (int x = 0; x < level.width; ++x) {
        const float want = region_max(base, static_cast<int>(x * scale), static_cast<int>(y * scale),
                                      static_cast<int>((x + 1) * scale), static_cast<int>((y + 1) * scale));
        const float got = level.values[static_cast<std::size_t>(y) * level.width + x];
        if (got != want) {
          std::ostringstream s;
          s << "level " << l << " texel (" << x << "," << y << ") = " << got << ", footprint max " << want;
          return s.str();
        }
      }
    }
    if (l + 1 == pyramid.levels.size() && (level.width != 1 || level.height != 1)) return "pyramid does not end at 1x1";
  }
  return std::nullopt;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Closest point by Voronoi region of the triangle.
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const Face& f : mesh.faces) {
    best = std::min(best, point_triangle_distance(p, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]));
  }
  return best;
}

GridMinimum grid_minimize(const Quadric& q, const Vec3& lo, const Vec3& hi, int n) {
  GridMinimum best{lo, std::numeric_limits<double>::infinity()};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const Vec3 t(static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1), static_cast<double>(k) / (n - 1));
        const Vec3 x = lo + (hi - lo).cwiseProduct(t);
        const double h[4] = {x.x(), x.y(), x.z(), 1.0};
        double e = 0.0;
        for (int r = 0; r < 4; ++r) {
          for (int c = 0; c < 4; ++c) e += h[r] * q.matrix(r, c) * h[c];
        }
        if (e < best.cost) best = {x, e};
      }
    }
  }
  return best;
}

PatchSelection select_patches(const ErrorImage& error, int patch_size) {
  PatchSelection out;
  for (int py = 0; py < error.height; py += patch_size) {
    for (int px = 0; px < error.width; px += patch_size) {
      double sum = 0.0;
      int count = 0;
      for (int y = py; y < std::min(py + patch_size, error.height); ++y) {
        for (int x = px; x < std::min(px + patch_size, error.width); ++x) {
          sum += error.values[static_cast<std::size_t>(y) * error.width + x];
          ++count;
        }
      }
      out.means.push_back(sum / count);
    }
  }
  double total = 0.0;
  for (double m : out.means) total += m;
  out.frame_mean = total / static_cast<double>(out.means.size());
  for (double m : out.means) out.selected.push_back(m > 3.0 * out.frame_mean ? 1 : 0);
  return out;
}

DensificationPlan plan_anchors(const PatchSelection& patches, int patch_size, const DepthMap& depth,
                               const Camera& camera, const Vec3& origin, double cell_size, std::uint32_t capacity,
                               std::uint32_t frame_id) {
  DensificationPlan plan;
  std::map<std::array<std::int64_t, 3>, std::uint32_t> cells;
  const int cols = (depth.width + patch_size - 1) / patch_size;
  for (std::size_t p = 0; p < patches.selected.size(); ++p) {
    if (!patches.selected[p]) continue;
    const int col = static_cast<int>(p % cols);
    const int row = static_cast<int>(p / cols);
    const int x0 = col * patch_size;
    const int y0 = row * patch_size;
    const int x1 = std::min(x0 + patch_size, depth.width);
    const int y1 = std::min(y0 + patch_size, depth.height);
    const int u = x0 + (x1 - x0) / 2;
    const int v = y0 + (y1 - y0) / 2;
    const float z = depth.values[static_cast<std::size_t>(v) * depth.width + u];
    if (z == 1.0f) {
      ++plan.background_skipped;
      continue;
    }
    const Vec3 a = proxygs::back_project(camera, u, v, linearize_depth(z, camera.near, camera.far));
    std::array<std::int64_t, 3> cell;
    for (int k = 0; k < 3; ++k) cell[k] = static_cast<std::int64_t>(std::floor((a[k] - origin[k]) / cell_size));
    std::uint32_t& count = cells[cell];
    if (count >= capacity) {
      ++plan.rejected_count;
      continue;
    }
    ++count;
    PlannedAnchor pa;
    pa.position = {static_cast<float>(a.x()), static_cast<float>(a.y()), static_cast<float>(a.z())};
    pa.frame_id = frame_id;
    pa.patch_col = col;
    pa.patch_row = row;
    pa.pixel_x = u;
    pa.pixel_y = v;
    plan.anchors.push_back(pa);
  }
  return plan;
}

std::vector<std::uint8_t> clusters_with_visible_fragments(const TriangleMesh& mesh,
                                                          const std::vector<Cluster>& clusters,
                                                          const Camera& camera) {
  std::vector<std::int64_t> owner(mesh.faces.size(), -1);
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    for (auto f : clusters[k].triangle_indices) owner[f] = static_cast<std::int64_t>(k);
  }
  const RayCast rc = raycast(mesh, camera);
  std::vector<std::uint8_t> visible(clusters.size(), 0);
  for (auto f : rc.face) {
    if (f >= 0 && owner[f] >= 0) visible[owner[f]] = 1;
  }
  return visible;
}

}  // namespace proxygs::ref
