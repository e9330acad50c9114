#include "proxygs/reference.hpp"
#include "proxygs/scene.hpp"
#include "proxygs/visibility.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace proxygs;

namespace {

Cluster box_cluster(const Vec3& lo, const Vec3& hi) {
  Cluster c;
  c.aabb_min = lo;
  c.aabb_max = hi;
  return c;
}

AnchorSet random_anchors(std::mt19937_64& g, std::size_t n, double lo, double hi) {
  AnchorSet a;
  a.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.positions.push_back({static_cast<float>(testing::uniform(g, lo, hi)),
                           static_cast<float>(testing::uniform(g, lo, hi)),
                           static_cast<float>(testing::uniform(g, lo, hi))});
  }
  return a;
}

}  // namespace

TEST_CASE("frustum planes of the identity clip transform") {
  const FrustumPlanes f = extract_frustum(Mat4(Mat4::Identity()));
  const Vec3 normals[6] = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0), Vec3(0, 0, 1), Vec3(0, 0, -1)};
  const double offsets[6] = {1, 1, 1, 1, 0, 1};
  for (int i = 0; i < 6; ++i) {
    CHECK((f.planes[i].normal - normals[i]).norm() < 1e-15);
    CHECK(f.planes[i].offset == doctest::Approx(offsets[i]));
  }
}

TEST_CASE("frustum planes classify points like the clip-space range test") {
  std::mt19937_64 g(41);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 eye = testing::random_point(g, -20, 20);
    const Camera cam = Camera::look_at(eye, eye + testing::random_point(g, -1, 1) + Vec3(0.1, 0, 0), Vec3(0, 1, 0),
                                       testing::uniform(g, 30, 110), testing::uniform(g, 0.1, 2), 60,
                                       1 + static_cast<int>(g() % 800), 1 + static_cast<int>(g() % 800));
    const Mat4 m = view_projection(cam);
    const FrustumPlanes f = extract_frustum(cam);
    int inside_count = 0;
    for (int i = 0; i < 10000; ++i) {
      const Vec3 x = eye + testing::random_point(g, -70, 70);
      const Vec4 c = m * Vec4(x.x(), x.y(), x.z(), 1.0);
      const double margins[6] = {c.w() + c.x(), c.w() - c.x(), c.w() + c.y(), c.w() - c.y(), c.z(), c.w() - c.z()};
      bool inside = true, ambiguous = false;
      for (int k = 0; k < 6; ++k) {
        if (std::abs(f.planes[k].distance(x)) < 1e-9) ambiguous = true;
        if (margins[k] < 0) inside = false;
      }
      if (ambiguous) continue;
      bool planes_inside = true;
      for (const Plane& p : f.planes) planes_inside = planes_inside && p.distance(x) > 0;
      CHECK(planes_inside == inside);
      inside_count += inside;
    }
    CHECK(inside_count > 0);
  }
}

TEST_CASE("frustum culling of boxes") {
  const Camera cam = testing::forward_camera(90, 1, 100, 64, 64);
  const FrustumPlanes f = extract_frustum(cam);
  const std::vector<Cluster> clusters = {
      box_cluster(Vec3(-1, -1, -10), Vec3(1, 1, -5)),     // behind
      box_cluster(Vec3(-1, -1, -1), Vec3(1, 1, 1)),       // contains the camera
      box_cluster(Vec3(-1, -1, 10), Vec3(1, 1, 12)),      // straight ahead
      box_cluster(Vec3(-1, -1, 150), Vec3(1, 1, 160)),    // beyond far
      box_cluster(Vec3(30, -1, 10), Vec3(40, 1, 12)),     // right of the view
      box_cluster(Vec3(101, -1, 99), Vec3(130, 1, 130)),  // outside, but straddles far and right planes
  };
  const auto culled = frustum_cull(clusters, f);
  CHECK(culled == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0});
  CHECK(frustum_cull(clusters, f, 1) == frustum_cull(clusters, f, 4));
}

TEST_CASE("occlusion test against a full-screen occluder") {
  const Camera cam = testing::forward_camera(90, 1, 100, 64, 64);
  const std::vector<Cluster> clusters = {box_cluster(Vec3(-0.2, -0.2, 2), Vec3(0.2, 0.2, 3))};
  const double z = *conservative_depth(clusters[0], cam);
  CHECK(z == doctest::Approx(100.0 / 99.0 * (1 - 1.0 / 2.0)).epsilon(1e-9));

  const HiZPyramid occluder = build_hiz(DepthMap(64, 64, 0.1f));
  CHECK(occlusion_cull_clusters(clusters, cam, occluder) == std::vector<std::uint8_t>{1});
  const HiZPyramid empty = build_hiz(DepthMap(64, 64));
  CHECK(occlusion_cull_clusters(clusters, cam, empty) == std::vector<std::uint8_t>{0});
  const HiZPyramid behind = build_hiz(DepthMap(64, 64, 0.9f));
  CHECK(occlusion_cull_clusters(clusters, cam, behind) == std::vector<std::uint8_t>{0});

  // A cluster straddling the camera plane is never occluded.
  const std::vector<Cluster> straddle = {box_cluster(Vec3(-1, -1, -1), Vec3(1, 1, 3))};
  CHECK(occlusion_cull_clusters(straddle, cam, occluder) == std::vector<std::uint8_t>{0});

  CHECK_THROWS_AS(occlusion_cull_clusters(clusters, cam, build_hiz(DepthMap(32, 64))), std::invalid_argument);
}

TEST_CASE("occluded clusters never own a visible fragment") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticSpec spec;
    spec.box_count = 20;
    spec.anchor_count = 0;
    spec.camera_count = 2;
    spec.width = 96;
    spec.height = 72;
    spec.box_subdiv = 2;
    Config config;
    config.tau_min = 4;
    config.tau_max = 16;
    const SceneBundle b = generate_synthetic_scene(seed, spec, config);
    for (std::size_t ci = 0; ci < b.cameras.size(); ++ci) {
      const Camera& cam = b.cameras[ci];
      const auto visible = ref::clusters_with_visible_fragments(b.proxy_mesh, b.clusters, cam);
      const PipelineResult r = run_pipeline(b, ci, 1);
      for (std::size_t k = 0; k < b.clusters.size(); ++k) {
        if (!visible[k]) continue;
        CHECK(r.frustum_culled[k] == 0);
        CHECK(r.occluded[k] == 0);
      }
      // Culling clusters must not change the depth map.
      CHECK(r.depth == rasterize_depth(b.proxy_mesh, cam));
    }
  }
}

TEST_CASE("anchor filter verdicts in simple cases") {
  const Camera cam = testing::forward_camera(90, 1, 100, 64, 64);
  const DepthMap wall(64, 64, static_cast<float>(hardware_depth(5.0, 1, 100)));
  AnchorSet a;
  a.positions = {
      {0, 0, 3},      // in front of the wall
      {0, 0, 15},     // 10 units behind
      {0, 0, 5.2f},   // behind, within gamma
      {0, 0, -4},     // behind the camera
      {50, 0, 10},    // outside the view
      {0, 0, 0},      // on the camera plane
  };
  const CullMask m = cull_anchors(a, cam, wall, 0.3);
  const std::vector<Verdict> expected = {Verdict::kept,        Verdict::culled_occluded, Verdict::kept,
                                         Verdict::culled_near, Verdict::culled_offscreen, Verdict::culled_near};
  CHECK(m.verdicts == expected);
  CHECK(m.kept_count == 2);
  CHECK(m.histogram() == std::array<std::size_t, 4>{2, 2, 1, 1});

  // Free space: background depth keeps everything on screen.
  const CullMask open = cull_anchors(a, cam, DepthMap(64, 64), 0.3);
  CHECK(open.verdicts[1] == Verdict::kept);
  CHECK(open.kept_count == 3);

  CHECK_THROWS_AS(cull_anchors(a, cam, DepthMap(63, 64), 0.3), std::invalid_argument);
  CHECK_THROWS_AS(cull_anchors_staged(a, cam, DepthMap(64, 65), 0.3), std::invalid_argument);
}

TEST_CASE("fused, staged and scalar anchor filters agree") {
  std::mt19937_64 g(42);
  for (int scene = 0; scene < 4; ++scene) {
    const TriangleMesh mesh = testing::random_triangles(g, 300);
    const Camera cam = testing::forward_camera(testing::uniform(g, 50, 100), 1.0, 60.0, 120, 90);
    const DepthMap depth = rasterize_depth(mesh, cam);
    const AnchorSet a = random_anchors(g, 50000, -40, 60);
    for (double gamma : {0.1, 0.3, 0.6, 1.0}) {
      const CullMask fused = cull_anchors(a, cam, depth, gamma);
      CHECK(fused == cull_anchors_staged(a, cam, depth, gamma));
      CHECK(fused == ref::cull_anchors(a, cam, depth, gamma));
      CHECK(fused == cull_anchors(a, cam, depth, gamma, {}, 1));
      CHECK(fused == cull_anchors(a, cam, depth, gamma, {}, 3));
    }
  }
}

TEST_CASE("a larger gamma never culls more anchors") {
  std::mt19937_64 g(43);
  const TriangleMesh mesh = testing::random_triangles(g, 500);
  const Camera cam = testing::forward_camera(80, 1.0, 60.0, 100, 100);
  const DepthMap depth = rasterize_depth(mesh, cam);
  const AnchorSet a = random_anchors(g, 50000, -30, 60);
  CullMask prev = cull_anchors(a, cam, depth, 0.0);
  for (double gamma : {0.1, 0.3, 0.6, 1.0, 5.0}) {
    const CullMask next = cull_anchors(a, cam, depth, gamma);
    for (std::size_t i = 0; i < a.count(); ++i) {
      if (prev.verdicts[i] == Verdict::kept) CHECK(next.verdicts[i] == Verdict::kept);
    }
    CHECK(next.kept_count >= prev.kept_count);
    prev = next;
  }
}

TEST_CASE("operand diagnostic counts") {
  std::mt19937_64 g(44);
  const TriangleMesh mesh = testing::random_triangles(g, 300);
  const Camera cam = testing::forward_camera(80, 1.0, 60.0, 100, 100);
  const DepthMap depth = rasterize_depth(mesh, cam);
  const AnchorSet a = random_anchors(g, 20000, -30, 60);
  const OperandDiagnostic d = cull_anchors_operand_diagnostic(a, cam, depth, 0.3);
  const auto h = cull_anchors(a, cam, depth, 0.3).histogram();
  CHECK(d.view_culled == h[static_cast<int>(Verdict::culled_occluded)]);
  CHECK(d.tested >= d.view_culled);
  CHECK(d.disagreements <= d.tested);
  CHECK(d.disagreements >= (d.view_culled > d.clip_culled ? d.view_culled - d.clip_culled : d.clip_culled - d.view_culled));
  // Inside the far plane clip-space z never exceeds the view depth.
  CHECK(d.clip_culled <= d.view_culled);
}

TEST_CASE("depth from a subset of clusters only keeps more anchors") {
  std::mt19937_64 g(45);
  const TriangleMesh mesh = testing::random_triangles(g, 600);
  const auto clusters = build_clusters(mesh, 8, 32);
  const Camera cam = testing::forward_camera(80, 1.0, 60.0, 100, 100);
  const AnchorSet a = random_anchors(g, 20000, -30, 60);
  const CullMask full = cull_anchors(a, cam, rasterize_depth(mesh, cam), 0.3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::uint8_t> mask(clusters.size());
    for (auto& m : mask) m = g() % 2;
    const CullMask partial = cull_anchors(a, cam, rasterize_clusters(mesh, clusters, cam, mask), 0.3);
    for (std::size_t i = 0; i < a.count(); ++i) {
      if (partial.verdicts[i] == Verdict::culled_occluded) CHECK(full.verdicts[i] == Verdict::culled_occluded);
    }
    CHECK(partial.kept_count >= full.kept_count);
  }
}
