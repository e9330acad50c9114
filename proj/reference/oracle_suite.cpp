#include "proxygs/reference.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace proxygs::ref {

bool OracleReport::all_passed() const {
  return std::all_of(results.begin(), results.end(), [](const OracleResult& r) { return r.passed; });
}

const OracleResult* OracleReport::find(const std::string& name) const {
  for (const auto& r : results) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

io::json OracleReport::to_json() const {
  io::json arr = io::json::array();
  for (const auto& r : results) {
    arr.push_back({{"name", r.name},
                   {"passed", r.passed},
                   {"skipped", r.skipped},
                   {"checked", r.checked},
                   {"detail", r.detail}});
  }
  return {{"all_passed", all_passed()}, {"oracles", arr}};
}

namespace {

OracleResult named(const char* name) {
  OracleResult r;
  r.name = name;
  return r;
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kept: return "kept";
    case Verdict::culled_near: return "culled_near";
    case Verdict::culled_offscreen: return "culled_offscreen";
    case Verdict::culled_occluded: return "culled_occluded";
  }
  return "?";
}

std::vector<std::uint32_t> first_faces(const TriangleMesh& mesh, std::size_t limit) {
  std::vector<std::uint32_t> faces(std::min(limit, mesh.faces.size()));
  for (std::size_t i = 0; i < faces.size(); ++i) faces[i] = static_cast<std::uint32_t>(i);
  return faces;
}

OracleResult raster_raycast(const SceneBundle& b, const Camera& cam, const OracleOptions& opt) {
  OracleResult r = named("raster_raycast");
  const Camera small = reduced_camera(cam, opt.max_resolution);
  const auto faces = first_faces(b.proxy_mesh, opt.max_triangles);
  RasterOptions ro;
  ro.workers = opt.workers;
  const DepthMap fast = rasterize_faces(b.proxy_mesh, faces, small, ro);
  const RayCast rc = raycast(b.proxy_mesh, faces, small);
  for (int y = 0; y < small.height && r.passed; ++y) {
    for (int x = 0; x < small.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * small.width + x;
      ++r.checked;
      const bool fast_cov = fast.values[i] != 1.0f;
      const bool ref_cov = rc.face[i] >= 0;
      std::ostringstream s;
      if (fast_cov != ref_cov) {
        s << "pixel (" << x << "," << y << "): raster " << (fast_cov ? "covered" : "empty") << ", ray cast "
          << (ref_cov ? "covered" : "empty");
      } else if (fast_cov && std::abs(fast.values[i] - rc.exact_depth[i]) > 1e-6) {
        s.precision(10);
        s << "pixel (" << x << "," << y << "): raster depth " << fast.values[i] << ", ray cast " << rc.exact_depth[i];
      } else {
        continue;
      }
      r.passed = false;
      r.detail = s.str();
      break;
    }
  }
  if (r.passed) {
    std::ostringstream s;
    s << faces.size() << " faces at " << small.width << "x" << small.height;
    r.detail = s.str();
  }
  return r;
}

OracleResult hiz_footprint(const PipelineResult& pr) {
  OracleResult r = named("hiz_footprint");
  for (const auto& l : pr.pyramid.levels) r.checked += l.values.size();
  if (auto err = check_hiz_footprints(pr.pyramid)) {
    r.passed = false;
    r.detail = *err;
  }
  return r;
}

OracleResult cluster_occlusion(const SceneBundle& b, const Camera& cam, const OracleOptions& opt) {
  OracleResult r = named("cluster_occlusion");
  if (b.proxy_mesh.faces.size() > opt.max_triangles) {
    r.skipped = true;
    r.detail = "proxy has " + std::to_string(b.proxy_mesh.faces.size()) + " faces, limit " +
               std::to_string(opt.max_triangles);
    return r;
  }
  const Camera small = reduced_camera(cam, opt.max_resolution);
  const auto outside = frustum_cull(b.clusters, extract_frustum(small), opt.workers);
  std::vector<std::uint8_t> draw(outside.size());
  for (std::size_t k = 0; k < draw.size(); ++k) draw[k] = outside[k] ? 0 : 1;
  RasterOptions ro;
  ro.workers = opt.workers;
  const DepthMap depth = rasterize_clusters(b.proxy_mesh, b.clusters, small, draw, ro);
  const HiZPyramid pyramid = build_hiz(depth, opt.workers);
  const auto occluded = occlusion_cull_clusters(b.clusters, small, pyramid,
                                                OcclusionParams{b.config.level_c, b.config.padding}, opt.workers);
  const auto visible = clusters_with_visible_fragments(b.proxy_mesh, b.clusters, small);
  for (std::size_t k = 0; k < b.clusters.size(); ++k) {
    ++r.checked;
    const char* why = nullptr;
    if (outside[k] && visible[k]) why = "frustum-culled";
    else if (!outside[k] && occluded[k] && visible[k]) why = "occlusion-culled";
    if (why) {
      r.passed = false;
      r.detail = "cluster " + std::to_string(k) + " is " + why + " but has visible fragments";
      break;
    }
  }
  return r;
}

OracleResult anchor_cull(const SceneBundle& b, const Camera& cam, const DepthMap& pipeline_depth,
                         const OracleOptions& opt) {
  OracleResult r = named("anchor_cull");
  const DepthMap& fast_depth = opt.injected_depth ? *opt.injected_depth : pipeline_depth;
  // The reference side gets its own depth so an injected map cannot hide itself.
  RasterOptions ro;
  ro.workers = opt.workers;
  std::vector<std::uint8_t> draw;
  const auto outside = frustum_cull(b.clusters, extract_frustum(cam), opt.workers);
  for (auto o : outside) draw.push_back(o ? 0 : 1);
  const DepthMap ref_depth = b.clusters.empty() ? rasterize_depth(b.proxy_mesh, cam, ro)
                                                : rasterize_clusters(b.proxy_mesh, b.clusters, cam, draw, ro);
  CullMask fast;
  try {
    fast = proxygs::cull_anchors(b.anchors, cam, fast_depth, b.config.gamma, b.config.projection(), opt.workers);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("fast filter threw: ") + e.what();
    return r;
  }
  const CullMask slow = ref::cull_anchors(b.anchors, cam, ref_depth, b.config.gamma, b.config.projection());
  for (std::size_t i = 0; i < slow.verdicts.size(); ++i) {
    ++r.checked;
    if (fast.verdicts[i] != slow.verdicts[i]) {
      r.passed = false;
      r.detail = "anchor " + std::to_string(i) + ": fast " + verdict_name(fast.verdicts[i]) + ", reference " +
                 verdict_name(slow.verdicts[i]);
      return r;
    }
  }
  if (fast.kept_count != slow.kept_count) {
    r.passed = false;
    r.detail = "kept counts differ: " + std::to_string(fast.kept_count) + " vs " + std::to_string(slow.kept_count);
  }
  return r;
}

OracleResult staged_cull(const SceneBundle& b, const Camera& cam, const DepthMap& depth, const OracleOptions& opt) {
  OracleResult r = named("staged_cull");
  const CullMask fast = proxygs::cull_anchors(b.anchors, cam, depth, b.config.gamma, b.config.projection(), opt.workers);
  const CullMask staged = cull_anchors_staged(b.anchors, cam, depth, b.config.gamma, b.config.projection());
  for (std::size_t i = 0; i < fast.verdicts.size(); ++i) {
    ++r.checked;
    if (fast.verdicts[i] != staged.verdicts[i]) {
      r.passed = false;
      r.detail = "anchor " + std::to_string(i) + ": fused " + verdict_name(fast.verdicts[i]) + ", staged " +
                 verdict_name(staged.verdicts[i]);
      break;
    }
  }
  return r;
}

OracleResult back_projection(const Camera& cam, const DepthMap& depth) {
  OracleResult r = named("back_projection");
  const int step = std::max(1, std::max(cam.width, cam.height) / 64);
  for (int v = 0; v < cam.height; v += step) {
    for (int u = 0; u < cam.width; u += step) {
      const float z = depth.at(u, v);
      if (z == 1.0f) continue;
      ++r.checked;
      const double d = linearize_depth(z, cam.near, cam.far);
      const Vec3 fast = proxygs::back_project(cam, u, v, d);
      const Vec3 slow = ref::back_project(cam, u, v, d);
      const double scale = 1.0 + (slow - cam.center).norm();
      std::ostringstream s;
      if ((fast - slow).norm() > 1e-9 * scale) {
        s << "pixel (" << u << "," << v << "): positions differ by " << (fast - slow).norm();
      } else {
        const PixelCoord px = ndc_to_pixel(project(cam, fast), cam.width, cam.height);
        if (!px.in_bounds || px.x != u || px.y != v) {
          s << "pixel (" << u << "," << v << ") re-projects to (" << px.x << "," << px.y << ")";
        } else {
          continue;
        }
      }
      r.passed = false;
      r.detail = s.str();
      return r;
    }
  }
  return r;
}

OracleResult qem_grid_search(const SceneBundle& b) {
  OracleResult r = named("qem_grid_search");
  TriangleMesh mesh = b.proxy_mesh;
  annotate_mesh(mesh, b.config.feature_angle_deg);
  const auto quadrics = vertex_quadrics(mesh, b.config.lambda_b);
  const auto edges = edge_faces(mesh);
  constexpr std::size_t kEdges = 200;
  constexpr int kGrid = 21;
  for (std::size_t e = 0; e < std::min(kEdges, edges.size()); ++e) {
    const auto [i, j] = edges[e].first;
    const Vec3& xi = mesh.vertices[i];
    const Vec3& xj = mesh.vertices[j];
    const CollapseCandidate c = optimal_collapse(quadrics[i], quadrics[j], xi, xj);
    const Quadric q = quadrics[i] + quadrics[j];
    ++r.checked;
    const double tol = 1e-9 * (1.0 + q.matrix.cwiseAbs().maxCoeff() * (1.0 + xi.squaredNorm() + xj.squaredNorm()));
    const double own = q.error(c.optimal_position);
    if (std::abs(own - c.cost) > tol) {
      r.passed = false;
      r.detail = "edge " + std::to_string(e) + ": reported cost does not match its position";
      return r;
    }
    const Eigen::JacobiSVD<Mat3> svd(q.matrix.topLeftCorner<3, 3>());
    const auto sv = svd.singularValues();
    const bool invertible = sv(0) > 0.0 && sv(2) > kSingularRatio * sv(0);
    const double fallback = std::min({q.error(0.5 * (xi + xj)), q.error(xi), q.error(xj)});
    std::ostringstream s;
    s.precision(12);
    if (invertible) {
      const Vec3 pad = Vec3::Constant(0.25 * (xi - xj).norm() + 1e-3);
      const Vec3 lo = xi.cwiseMin(xj) - pad;
      const Vec3 hi = xi.cwiseMax(xj) + pad;
      const GridMinimum g = grid_minimize(q, lo, hi, kGrid);
      if (c.cost > g.cost + tol || c.cost > fallback + tol) {
        s << "edge " << e << ": cost " << c.cost << " above grid minimum " << g.cost;
      } else {
        continue;
      }
    } else if (std::abs(c.cost - fallback) > tol) {
      s << "edge " << e << ": singular system, cost " << c.cost << ", best fallback " << fallback;
    } else {
      continue;
    }
    r.passed = false;
    r.detail = s.str();
    return r;
  }
  return r;
}

ErrorImage synthetic_error(int width, int height, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> base(0.0f, 1.0f);
  ErrorImage e(width, height);
  for (auto& v : e.values) v = base(gen);
  // A few hot blocks well above the frame mean.
  std::uniform_int_distribution<int> px(0, std::max(0, width - 1));
  std::uniform_int_distribution<int> py(0, std::max(0, height - 1));
  for (int k = 0; k < 40; ++k) {
    const int x0 = px(gen);
    const int y0 = py(gen);
    for (int y = y0; y < std::min(height, y0 + 24); ++y) {
      for (int x = x0; x < std::min(width, x0 + 24); ++x) e.at(x, y) *= 25.0f;
    }
  }
  return e;
}

OracleResult densify(const SceneBundle& b, const Camera& cam, const DepthMap& depth, std::size_t cam_idx,
                     const OracleOptions& opt) {
  OracleResult r = named("densify");
  const int ps = b.config.patch_size;
  if (ps > cam.width || ps > cam.height) {
    r.skipped = true;
    r.detail = "patch size exceeds the viewport";
    return r;
  }
  const ErrorImage err = synthetic_error(cam.width, cam.height, 0x9e3779b9ULL + cam_idx);
  const PatchGrid fast = proxygs::select_patches(err, ps, opt.workers);
  const PatchSelection slow = ref::select_patches(err, ps);
  r.checked += slow.means.size();
  if (fast.patch_mean != slow.means || fast.frame_mean != slow.frame_mean || fast.selected != slow.selected) {
    r.passed = false;
    for (std::size_t p = 0; p < slow.means.size(); ++p) {
      if (p >= fast.selected.size() || fast.selected[p] != slow.selected[p] || fast.patch_mean[p] != slow.means[p]) {
        r.detail = "patch " + std::to_string(p) + " selection or mean differs";
        return r;
      }
    }
    r.detail = "frame mean differs";
    return r;
  }
  ProxyGrid grid = make_proxy_grid(b.proxy_mesh, b.config);
  const auto plan = proxygs::plan_anchors(fast, depth, cam, grid, static_cast<std::uint32_t>(cam_idx));
  const auto naive = ref::plan_anchors(slow, ps, depth, cam, grid.origin, grid.cell_size, grid.capacity,
                                  static_cast<std::uint32_t>(cam_idx));
  if (plan.anchors.size() != naive.anchors.size() || plan.rejected_count != naive.rejected_count ||
      plan.background_skipped != naive.background_skipped) {
    r.passed = false;
    r.detail = "plan sizes differ: " + std::to_string(plan.anchors.size()) + " vs " +
               std::to_string(naive.anchors.size());
    return r;
  }
  for (std::size_t i = 0; i < plan.anchors.size(); ++i) {
    const PlannedAnchor& a = plan.anchors[i];
    const PlannedAnchor& n = naive.anchors[i];
    ++r.checked;
    if (a.position != n.position || a.patch_col != n.patch_col || a.patch_row != n.patch_row ||
        a.pixel_x != n.pixel_x || a.pixel_y != n.pixel_y || a.frame_id != n.frame_id) {
      r.passed = false;
      r.detail = "planned anchor " + std::to_string(i) + " differs from the naive plan";
      return r;
    }
    const auto ext = fast.extent(a.patch_col, a.patch_row);
    const PixelCoord px =
        ndc_to_pixel(project(cam, Vec3(a.position[0], a.position[1], a.position[2])), cam.width, cam.height);
    if (!px.in_bounds || px.x < ext[0] || px.x >= ext[2] || px.y < ext[1] || px.y >= ext[3]) {
      r.passed = false;
      r.detail = "planned anchor " + std::to_string(i) + " re-projects outside patch (" +
                 std::to_string(a.patch_col) + "," + std::to_string(a.patch_row) + ")";
      return r;
    }
  }
  for (const auto& [cell, count] : grid.occupancy) {
    if (count > grid.capacity) {
      r.passed = false;
      r.detail = "a grid cell holds " + std::to_string(count) + " anchors";
      return r;
    }
  }
  return r;
}

}  // namespace

OracleReport oracle_suite(const SceneBundle& bundle, std::size_t camera_index, const OracleOptions& options) {
  const PipelineResult pr = run_pipeline(bundle, camera_index, options.workers);
  const Camera& cam = bundle.cameras[camera_index];
  OracleReport report;
  report.results.push_back(raster_raycast(bundle, cam, options));
  report.results.push_back(hiz_footprint(pr));
  report.results.push_back(cluster_occlusion(bundle, cam, options));
  report.results.push_back(anchor_cull(bundle, cam, pr.depth, options));
  report.results.push_back(staged_cull(bundle, cam, pr.depth, options));
  report.results.push_back(back_projection(cam, pr.depth));
  report.results.push_back(qem_grid_search(bundle));
  report.results.push_back(densify(bundle, cam, pr.depth, camera_index, options));
  return report;
}

}  // namespace proxygs::ref
