#include "proxygs/depth_raster.hpp"
#include "proxygs/reference.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace proxygs;

namespace {

// Identity view and projection: world coordinates are clip coordinates with w = 1.
Camera clip_camera(int w, int h) {
  Camera cam;
  cam.near = 0.1;
  cam.far = 10.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

void add_triangle(TriangleMesh& m, const Vec3& a, const Vec3& b, const Vec3& c) {
  const auto base = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.insert(m.vertices.end(), {a, b, c});
  m.faces.push_back({base, base + 1, base + 2});
}

std::size_t covered(const DepthMap& d) {
  return static_cast<std::size_t>(std::count_if(d.values.begin(), d.values.end(), [](float v) { return v != 1.0f; }));
}

// First differing pixel between the raster and the ray cast, or an empty string.
std::string compare_with_raycast(const TriangleMesh& mesh, const Camera& cam, const RasterOptions& opt = {}) {
  const DepthMap fast = rasterize_depth(mesh, cam, opt);
  const auto rc = ref::raycast(mesh, cam);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * cam.width + x;
      const bool a = fast.values[i] != 1.0f;
      const bool b = rc.face[i] >= 0;
      if (a != b || (a && std::abs(fast.values[i] - rc.exact_depth[i]) > 1e-6)) {
        return "pixel " + std::to_string(x) + "," + std::to_string(y) + " raster " + std::to_string(fast.values[i]) +
               " ray " + std::to_string(rc.exact_depth[i]);
      }
    }
  }
  return {};
}

}  // namespace

TEST_CASE("narrow_depth_up rounds toward +infinity") {
  std::mt19937_64 g(1);
  for (int i = 0; i < 100000; ++i) {
    const double z = testing::uniform(g, 0, 1);
    const float f = narrow_depth_up(z);
    CHECK(static_cast<double>(f) >= z);
    CHECK(static_cast<double>(std::nextafter(f, 0.0f)) < z);
  }
  CHECK(narrow_depth_up(0.25) == 0.25f);
  CHECK(narrow_depth_up(1.0) == 1.0f);
  CHECK(narrow_depth_up(0.0) == 0.0f);
}

TEST_CASE("full-screen triangle at constant depth") {
  const Camera cam = clip_camera(37, 23);
  TriangleMesh m;
  add_triangle(m, Vec3(-1.5, -1.5, 0.25), Vec3(5, -1.5, 0.25), Vec3(-1.5, 5, 0.25));
  const DepthMap d = rasterize_depth(m, cam);
  CHECK(d.width == 37);
  CHECK(d.height == 23);
  for (float v : d.values) CHECK(v == 0.25f);
}

TEST_CASE("keep-minimum depth test in either order") {
  const Camera cam = clip_camera(64, 64);
  TriangleMesh near_first, far_first;
  add_triangle(near_first, Vec3(-3, -3, 0.25), Vec3(5, -3, 0.25), Vec3(-3, 5, 0.25));
  add_triangle(near_first, Vec3(-3, -3, 0.75), Vec3(-3, 5, 0.75), Vec3(5, -3, 0.75));
  add_triangle(far_first, Vec3(-3, -3, 0.75), Vec3(-3, 5, 0.75), Vec3(5, -3, 0.75));
  add_triangle(far_first, Vec3(-3, -3, 0.25), Vec3(5, -3, 0.25), Vec3(-3, 5, 0.25));
  for (const auto* m : {&near_first, &far_first}) {
    const DepthMap d = rasterize_depth(*m, cam);
    for (float v : d.values) CHECK(v == 0.25f);
  }
}

TEST_CASE("fragments beyond the far plane or behind the near plane are dropped") {
  const Camera cam = clip_camera(16, 16);
  TriangleMesh beyond, behind;
  add_triangle(beyond, Vec3(-3, -3, 1.5), Vec3(5, -3, 1.5), Vec3(-3, 5, 1.5));
  add_triangle(behind, Vec3(-3, -3, -0.5), Vec3(5, -3, -0.5), Vec3(-3, 5, -0.5));
  CHECK(covered(rasterize_depth(beyond, cam)) == 0);
  CHECK(covered(rasterize_depth(behind, cam)) == 0);
  // Sloped in depth across the far plane: only the part with z <= 1 is drawn.
  TriangleMesh slope;
  add_triangle(slope, Vec3(-1, -3, 0.5), Vec3(-1, 5, 0.5), Vec3(1, -3, 1.5));
  add_triangle(slope, Vec3(1, -3, 1.5), Vec3(-1, 5, 0.5), Vec3(1, 5, 1.5));
  const DepthMap d = rasterize_depth(slope, cam);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const double z = 0.5 + ((x + 0.5) / 8.0) * 0.5;
      if (z <= 1.0) CHECK(d.at(x, y) == doctest::Approx(z).epsilon(1e-6));
      else CHECK(d.at(x, y) == 1.0f);
    }
  }
}

TEST_CASE("random scenes agree with the per-pixel ray cast") {
  std::mt19937_64 g(31);
  for (int scene = 0; scene < 10; ++scene) {
    const TriangleMesh m = testing::random_triangles(g, 1 + static_cast<int>(g() % 200));
    const Camera cam = testing::forward_camera(testing::uniform(g, 40, 100), 1.0, 60.0, 64, 64);
    CHECK(compare_with_raycast(m, cam) == "");
  }
}

TEST_CASE("near-plane clipping agrees with the ray cast") {
  std::mt19937_64 g(32);
  for (int scene = 0; scene < 10; ++scene) {
    TriangleMesh m;
    for (int i = 0; i < 60; ++i) {
      add_triangle(m, testing::random_point(g, -20, 20), testing::random_point(g, -20, 20),
                   testing::random_point(g, -20, 20));
    }
    const Camera cam = testing::forward_camera(80, 6.0, 30.0, 48, 40);
    CHECK(compare_with_raycast(m, cam) == "");
  }
}

TEST_CASE("shared edges are covered exactly once") {
  std::mt19937_64 g(33);
  const Camera cam = clip_camera(50, 40);
  // Jittered grid over [-1.2, 1.2]^2 split into triangles.
  const int n = 9;
  TriangleMesh m;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      const bool border = i == 0 || j == 0 || i == n || j == n;
      const double jx = border ? 0.0 : testing::uniform(g, -0.08, 0.08);
      const double jy = border ? 0.0 : testing::uniform(g, -0.08, 0.08);
      m.vertices.push_back(Vec3(-1.2 + 2.4 * i / n + jx, -1.2 + 2.4 * j / n + jy, 0.5));
    }
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const std::uint32_t a = j * (n + 1) + i, b = a + 1, c = a + n + 1, d = c + 1;
      if ((i + j) % 2) {
        m.faces.push_back({a, b, d});
        m.faces.push_back({a, d, c});
      } else {
        m.faces.push_back({a, b, c});
        m.faces.push_back({b, d, c});
      }
    }
  }
  std::size_t sum = 0;
  for (std::uint32_t f = 0; f < m.faces.size(); ++f) {
    const std::uint32_t one[1] = {f};
    sum += covered(rasterize_faces(m, one, cam));
  }
  CHECK(sum == 50u * 40u);
  CHECK(covered(rasterize_depth(m, cam)) == 50u * 40u);
}

TEST_CASE("output does not depend on face order, workers, tiling or early-z") {
  std::mt19937_64 g(34);
  TriangleMesh m = testing::random_triangles(g, 3000);
  const Camera cam = testing::forward_camera(70, 1.0, 80.0, 333, 257);
  const DepthMap base = rasterize_depth(m, cam);
  CHECK(covered(base) > 0);
  for (int workers : {1, 2, 3, 8}) {
    RasterOptions o;
    o.workers = workers;
    CHECK(rasterize_depth(m, cam, o) == base);
  }
  RasterOptions small;
  small.tile_size = 16;
  CHECK(rasterize_depth(m, cam, small) == base);
  RasterOptions no_early;
  no_early.early_z = false;
  CHECK(rasterize_depth(m, cam, no_early) == base);
  std::shuffle(m.faces.begin(), m.faces.end(), g);
  CHECK(rasterize_depth(m, cam) == base);
}

TEST_CASE("cluster mask selects faces") {
  std::mt19937_64 g(35);
  const TriangleMesh m = testing::random_triangles(g, 400);
  const auto clusters = build_clusters(m, 16, 64);
  const Camera cam = testing::forward_camera(70, 1.0, 80.0, 128, 96);
  std::vector<std::uint8_t> mask(clusters.size(), 0);
  std::vector<std::uint32_t> faces;
  for (std::size_t k = 0; k < clusters.size(); k += 2) {
    mask[k] = 1;
    faces.insert(faces.end(), clusters[k].triangle_indices.begin(), clusters[k].triangle_indices.end());
  }
  CHECK(rasterize_clusters(m, clusters, cam, mask) == rasterize_faces(m, faces, cam));
  CHECK(rasterize_clusters(m, clusters, cam, {}) == rasterize_depth(m, cam));
  std::vector<std::uint8_t> wrong(clusters.size() + 1, 1);
  CHECK_THROWS_AS(rasterize_clusters(m, clusters, cam, wrong), std::invalid_argument);
}

TEST_CASE("hi-z of a constant map is constant") {
  const HiZPyramid p = build_hiz(DepthMap(13, 7, 0.375f));
  CHECK(p.levels.size() == 5);  // 13 -> 7 -> 4 -> 2 -> 1
  for (const auto& l : p.levels) {
    for (float v : l.values) CHECK(v == 0.375f);
  }
  CHECK(p.levels.back().width == 1);
  CHECK(p.levels.back().height == 1);
}

TEST_CASE("hi-z of a 2x2 map") {
  DepthMap d(2, 2);
  d.values = {0.1f, 0.2f, 0.3f, 0.4f};
  const HiZPyramid p = build_hiz(d);
  REQUIRE(p.levels.size() == 2);
  CHECK(p.levels[1].values == std::vector<float>{0.4f});
}

TEST_CASE("hi-z texels equal the max over their footprint") {
  std::mt19937_64 g(36);
  for (const auto& [w, h] : {std::pair{33, 17}, std::pair{1, 1}, std::pair{1, 9}, std::pair{64, 64}, std::pair{127, 5}}) {
    DepthMap d(w, h);
    for (auto& v : d.values) v = static_cast<float>(testing::uniform(g, 0, 1));
    const HiZPyramid p = build_hiz(d);
    CHECK(ref::check_hiz_footprints(p) == std::nullopt);
    CHECK(build_hiz(d, 1).levels == p.levels);
  }
}

TEST_CASE("rect_max") {
  std::mt19937_64 g(37);
  DepthMap d(45, 30);
  for (auto& v : d.values) v = static_cast<float>(testing::uniform(g, 0, 1));
  const HiZPyramid p = build_hiz(d);
  CHECK(rect_max(p, {0, 3, 4, 4, 5}) == d.at(3, 4));
  const int top = p.max_level();
  CHECK(rect_max(p, {top, 0, 0, 1, 1}) == *std::max_element(d.values.begin(), d.values.end()));
  const auto& l2 = p.levels[2];
  CHECK(rect_max(p, {2, 0, 0, l2.width, l2.height}) == *std::max_element(d.values.begin(), d.values.end()));
  for (int i = 0; i < 500; ++i) {
    const int level = static_cast<int>(g() % p.levels.size());
    const auto& l = p.levels[level];
    const int x0 = static_cast<int>(g() % l.width), y0 = static_cast<int>(g() % l.height);
    const int x1 = x0 + 1 + static_cast<int>(g() % (l.width - x0));
    const int y1 = y0 + 1 + static_cast<int>(g() % (l.height - y0));
    const float got = rect_max(p, {level, x0, y0, x1, y1});
    const int s = 1 << level;
    const float want = ref::region_max(d, x0 * s, y0 * s, x1 * s, y1 * s);
    CHECK(got >= want);
    CHECK(got == want);
  }
  CHECK_THROWS_AS(rect_max(p, {top + 1, 0, 0, 1, 1}), std::out_of_range);
  CHECK_THROWS_AS(rect_max(p, {0, 0, 0, 46, 1}), std::out_of_range);
}
