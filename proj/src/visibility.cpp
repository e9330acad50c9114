#include "proxygs/visibility.hpp"

#include "proxygs/parallel.hpp"

#include <Eigen/LU>

#include <cmath>
#include <stdexcept>
#include <string>

namespace proxygs {

std::array<std::size_t, 4> CullMask::histogram() const {
  std::array<std::size_t, 4> h{};
  for (Verdict v : verdicts) ++h[static_cast<std::size_t>(v)];
  return h;
}

FrustumPlanes extract_frustum(const Mat4& m) {
  const Vec4 r0 = m.row(0).transpose();
  const Vec4 r1 = m.row(1).transpose();
  const Vec4 r2 = m.row(2).transpose();
  const Vec4 r3 = m.row(3).transpose();
  const Vec4 raw[6] = {r3 + r0, r3 - r0, r3 + r1, r3 - r1, r2, r3 - r2};

  // A point known to be inside: the NDC centre at mid depth.
  Vec3 inside = Vec3::Zero();
  bool have_inside = false;
  const Eigen::FullPivLU<Mat4> lu(m);
  if (lu.isInvertible()) {
    const Vec4 h = lu.solve(Vec4(0.0, 0.0, 0.5, 1.0));
    if (h.w() != 0.0) {
      inside = h.head<3>() / h.w();
      have_inside = true;
    }
  }

  FrustumPlanes out;
  for (int i = 0; i < 6; ++i) {
    const double len = raw[i].head<3>().norm();
    Plane p;
    if (len > 0.0) {
      p.normal = raw[i].head<3>() / len;
      p.offset = raw[i].w() / len;
    }
    if (have_inside && p.distance(inside) < 0.0) {
      p.normal = -p.normal;
      p.offset = -p.offset;
    }
    out.planes[i] = p;
  }
  return out;
}

FrustumPlanes extract_frustum(const Camera& camera) { return extract_frustum(view_projection(camera)); }

std::vector<std::uint8_t> frustum_cull(const std::vector<Cluster>& clusters, const FrustumPlanes& frustum,
                                       int workers) {
  const int threads = resolve_workers(workers);
  const auto n = static_cast<std::int64_t>(clusters.size());
  std::vector<std::uint8_t> culled(clusters.size(), 0);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t k = 0; k < n; ++k) {
    const auto corners = clusters[k].corners();
    for (const Plane& p : frustum.planes) {
      double best = -std::numeric_limits<double>::infinity();
      for (const Vec3& x : corners) best = std::max(best, p.distance(x));
      if (best < 0.0) {
        culled[k] = 1;
        break;
      }
    }
  }
  return culled;
}

std::vector<std::uint8_t> occlusion_cull_clusters(const std::vector<Cluster>& clusters, const Camera& camera,
                                                  const HiZPyramid& pyramid, const OcclusionParams& params,
                                                  int workers) {
  if (pyramid.levels.empty() || pyramid.levels[0].width != camera.width ||
      pyramid.levels[0].height != camera.height) {
    throw std::invalid_argument("occlusion_cull_clusters: pyramid does not match the camera viewport");
  }
  const int threads = resolve_workers(workers);
  const auto n = static_cast<std::int64_t>(clusters.size());
  std::vector<std::uint8_t> occluded(clusters.size(), 0);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t k = 0; k < n; ++k) {
    const ScreenRect rect = screen_rect(clusters[k], camera, params.padding);
    if (rect.empty) continue;
    const auto z = conservative_depth(clusters[k], camera);
    if (!z) continue;
    const LevelRect snapped = snap_level(rect, params.level_bias, pyramid.max_level());
    occluded[k] = *z >= static_cast<double>(rect_max(pyramid, snapped)) ? 1 : 0;
  }
  return occluded;
}

namespace {

void check_viewport(const Camera& camera, const DepthMap& depth) {
  if (depth.width != camera.width || depth.height != camera.height) {
    throw std::invalid_argument("depth map is " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                                " but the camera viewport is " + std::to_string(camera.width) + "x" +
                                std::to_string(camera.height));
  }
}

}  // namespace

CullMask cull_anchors(const AnchorSet& anchors, const Camera& camera, const DepthMap& depth, double gamma,
                      const ProjectionParams& params, int workers) {
  check_viewport(camera, depth);
  const int threads = resolve_workers(workers);
  const auto n = static_cast<std::int64_t>(anchors.count());
  const Mat4& view = camera.view;
  const Mat4& proj = camera.proj;
  const double width = camera.width;
  const double height = camera.height;
  const double near = camera.near;
  const double far = camera.far;

  CullMask mask;
  mask.verdicts.resize(anchors.count());
  std::size_t kept = 0;
#pragma omp parallel for num_threads(threads) schedule(static) reduction(+ : kept)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& a = anchors.positions[i];
    const Vec4 pv = transform_point(view, a[0], a[1], a[2], 1.0);
    const Vec4 ph = transform_point(proj, pv.x(), pv.y(), pv.z(), pv.w());
    Verdict verdict = Verdict::kept;
    if (!(ph.w() > params.tau_near)) {
      verdict = Verdict::culled_near;
    } else {
      const double denom = ph.w() + params.epsilon;
      const double fx = std::floor((ph.x() / denom + 1.0) / 2.0 * width);
      const double fy = std::floor((ph.y() / denom + 1.0) / 2.0 * height);
      if (!(fx >= 0.0 && fx < width && fy >= 0.0 && fy < height)) {
        verdict = Verdict::culled_offscreen;
      } else {
        const float z_hw = depth.at(static_cast<int>(fx), static_cast<int>(fy));
        if (z_hw != kBackgroundDepth) {
          const double z = z_hw;
          const double d_hat = (near * far) / (far - z * (far - near)) + gamma;
          if (pv.z() > d_hat) verdict = Verdict::culled_occluded;
        }
      }
    }
    mask.verdicts[i] = verdict;
    if (verdict == Verdict::kept) ++kept;
  }
  mask.kept_count = kept;
  return mask;
}

CullMask cull_anchors_staged(const AnchorSet& anchors, const Camera& camera, const DepthMap& depth, double gamma,
                             const ProjectionParams& params) {
  check_viewport(camera, depth);
  CullMask mask;
  mask.verdicts.reserve(anchors.count());
  for (std::size_t i = 0; i < anchors.count(); ++i) {
    const NdcPoint ndc = project(camera, anchors.at(i), params);
    Verdict verdict = Verdict::kept;
    if (!ndc.valid) {
      verdict = Verdict::culled_near;
    } else if (const PixelCoord px = ndc_to_pixel(ndc, camera.width, camera.height); !px.in_bounds) {
      verdict = Verdict::culled_offscreen;
    } else {
      const float z_hw = depth.at(static_cast<int>(px.x), static_cast<int>(px.y));
      if (z_hw != kBackgroundDepth) {
        const double d_hat = linearize_depth(z_hw, camera.near, camera.far) + gamma;
        if (ndc.view_depth > d_hat) verdict = Verdict::culled_occluded;
      }
    }
    mask.verdicts.push_back(verdict);
    if (verdict == Verdict::kept) ++mask.kept_count;
  }
  return mask;
}

OperandDiagnostic cull_anchors_operand_diagnostic(const AnchorSet& anchors, const Camera& camera,
                                                  const DepthMap& depth, double gamma,
                                                  const ProjectionParams& params) {
  check_viewport(camera, depth);
  OperandDiagnostic out;
  for (std::size_t i = 0; i < anchors.count(); ++i) {
    const NdcPoint ndc = project(camera, anchors.at(i), params);
    if (!ndc.valid) continue;
    const PixelCoord px = ndc_to_pixel(ndc, camera.width, camera.height);
    if (!px.in_bounds) continue;
    const float z_hw = depth.at(static_cast<int>(px.x), static_cast<int>(px.y));
    if (z_hw == kBackgroundDepth) continue;
    const double d_hat = linearize_depth(z_hw, camera.near, camera.far) + gamma;
    const bool by_view = ndc.view_depth > d_hat;
    const bool by_clip = ndc.z_clip > d_hat;
    ++out.tested;
    out.view_culled += by_view;
    out.clip_culled += by_clip;
    out.disagreements += by_view != by_clip;
  }
  return out;
}

}  // namespace proxygs
