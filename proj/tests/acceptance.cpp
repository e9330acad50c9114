// End-to-end acceptance run. Prints one PASS or FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "cli.hpp"
#include "proxygs/reference.hpp"
#include "proxygs/scene.hpp"
#include "proxygs/simplify.hpp"
#include "support.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>

using namespace proxygs;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome anchor_filter_exactness() {
  const auto t0 = Clock::now();
  std::size_t mismatches = 0, compared = 0;
  std::string first;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneBundle b = generate_synthetic_scene(seed, SyntheticSpec{});
    const std::size_t cam = seed % b.cameras.size();
    const DepthMap depth = run_pipeline(b, cam).depth;
    for (double gamma : {0.1, 0.3, 0.6, 1.0}) {
      const CullMask fast = cull_anchors(b.anchors, b.cameras[cam], depth, gamma, b.config.projection());
      const CullMask slow = ref::cull_anchors(b.anchors, b.cameras[cam], depth, gamma, b.config.projection());
      for (std::size_t i = 0; i < b.anchors.count(); ++i) {
        if (fast.verdicts[i] != slow.verdicts[i]) {
          if (first.empty()) first = " (first: seed " + std::to_string(seed) + " anchor " + std::to_string(i) + ")";
          ++mismatches;
        }
      }
      compared += b.anchors.count();
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 120.0,
          std::to_string(mismatches) + " mismatches over " + std::to_string(compared) +
              " verdicts (20 scenes x 4 gammas, 1000x1000), " + fmt("%.1f s", secs) + first};
}

// ---------------------------------------------------------------- 2

Outcome rasterizer_correctness() {
  std::mt19937_64 g(2024);
  std::size_t bad_pixels = 0, pixels = 0;
  double worst = 0.0;
  for (int scene = 0; scene < 50; ++scene) {
    const int n = 1 + static_cast<int>(g() % 200);
    TriangleMesh m;
    for (int i = 0; i < n; ++i) {
      // Mostly in front, some straddling the near plane.
      const Vec3 c(testing::uniform(g, -12, 12), testing::uniform(g, -12, 12), testing::uniform(g, -2, 35));
      for (int k = 0; k < 3; ++k) m.vertices.push_back(c + testing::random_point(g, -7, 7));
      const auto base = static_cast<std::uint32_t>(3 * i);
      m.faces.push_back({base, base + 1, base + 2});
    }
    const Vec3 target(testing::uniform(g, -0.3, 0.3), testing::uniform(g, -0.3, 0.3), 1.0);
    const Camera cam = Camera::look_at(Vec3::Zero(), target, Vec3(0, -1, 0), testing::uniform(g, 40, 100),
                                       testing::uniform(g, 0.5, 3), 40, 64, 64);
    const DepthMap fast = rasterize_depth(m, cam);
    const ref::RayCast rc = ref::raycast(m, cam);
    for (std::size_t i = 0; i < fast.values.size(); ++i) {
      const bool a = fast.values[i] != kBackgroundDepth;
      const bool b = rc.face[i] >= 0;
      ++pixels;
      if (a != b) {
        ++bad_pixels;
      } else if (a) {
        const double err = std::abs(static_cast<double>(fast.values[i]) - rc.exact_depth[i]);
        worst = std::max(worst, err);
        if (err > 1e-6) ++bad_pixels;
      }
    }
  }
  return {bad_pixels == 0, std::to_string(bad_pixels) + " violations over " + std::to_string(pixels) +
                               " pixels in 50 scenes, max depth error " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 3

Outcome hiz_soundness() {
  std::size_t violations = 0, occluded = 0, clusters = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SyntheticSpec spec;
    spec.box_count = 30;
    spec.anchor_count = 0;
    spec.camera_count = 1;
    spec.width = 128;
    spec.height = 96;
    spec.box_subdiv = 2;
    Config cfg;
    cfg.tau_min = 4;
    cfg.tau_max = 16;
    const SceneBundle b = generate_synthetic_scene(1000 + seed, spec, cfg);
    const PipelineResult r = run_pipeline(b, 0);
    const auto visible = ref::clusters_with_visible_fragments(b.proxy_mesh, b.clusters, b.cameras[0]);
    for (std::size_t k = 0; k < b.clusters.size(); ++k) {
      if (r.occluded[k]) ++occluded;
      if (visible[k] && (r.occluded[k] || r.frustum_culled[k])) ++violations;
    }
    clusters += b.clusters.size();
  }
  std::mt19937_64 g(77);
  std::size_t bad_maps = 0;
  for (int i = 0; i < 100; ++i) {
    const int w = 1 + static_cast<int>(g() % 300), h = 1 + static_cast<int>(g() % 300);
    DepthMap d(w, h);
    for (float& v : d.values) v = (g() % 5 == 0) ? 1.0f : static_cast<float>(testing::uniform(g, 0, 1));
    if (ref::check_hiz_footprints(build_hiz(d))) ++bad_maps;
  }
  return {violations == 0 && bad_maps == 0,
          std::to_string(violations) + " culled clusters with visible fragments (" + std::to_string(occluded) +
              " of " + std::to_string(clusters) + " occluded over 50 scenes); " + std::to_string(bad_maps) +
              " of 100 pyramids break the footprint max"};
}

// ---------------------------------------------------------------- 4

Outcome occlusion_effectiveness() {
  const SceneBundle b = generate_synthetic_scene(7, SyntheticSpec{});
  std::size_t in_frustum = 0, occluded = 0;
  for (std::size_t c = 0; c < b.cameras.size(); ++c) {
    const auto h = run_pipeline(b, c).mask.histogram();
    in_frustum += h[static_cast<int>(Verdict::kept)] + h[static_cast<int>(Verdict::culled_occluded)];
    occluded += h[static_cast<int>(Verdict::culled_occluded)];
  }
  const double frac = in_frustum ? static_cast<double>(occluded) / in_frustum : 0.0;
  return {frac >= 0.60, fmt("%.1f%%", 100 * frac) + " of " + std::to_string(in_frustum) +
                            " in-frustum anchors occluded over " + std::to_string(b.cameras.size()) + " cameras"};
}

// ---------------------------------------------------------------- 5

Outcome qem_quality() {
  std::vector<std::string> problems;
  const TriangleMesh sphere = make_icosphere(3);
  SimplifyOptions opt;
  opt.target_faces = 128;
  const SimplifyResult r = simplify(sphere, opt);
  const TriangleMesh& m = r.mesh;
  if (m.faces.size() > 128) problems.push_back("face count " + std::to_string(m.faces.size()));
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const Face& f : m.faces) {
    for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
  }
  bool manifold = true;
  for (const auto& [e, n] : directed) {
    if (n != 1 || !directed.count({e.second, e.first})) manifold = false;
  }
  if (!manifold) problems.push_back("not a closed oriented manifold");
  std::size_t flipped = 0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    const Vec3 c = (m.vertices[m.faces[f][0]] + m.vertices[m.faces[f][1]] + m.vertices[m.faces[f][2]]) / 3.0;
    if (face_normal(m, f).dot(c) <= 0.0) ++flipped;
  }
  if (flipped) problems.push_back(std::to_string(flipped) + " flipped faces");
  const auto [lo, hi] = mesh_bounds(sphere);
  double worst = 0.0;
  for (const Vec3& v : m.vertices) worst = std::max(worst, ref::point_mesh_distance(v, sphere));
  const double rel = worst / (hi - lo).norm();
  if (rel > 0.02) problems.push_back("distance " + fmt("%.4f", rel));

  const double size = 9.0;
  SimplifyOptions flat;
  flat.target_faces = 8;
  flat.boundary_weight = 1e3;
  Simplifier s(make_grid(10, size), flat);
  while (s.face_count() > flat.target_faces && s.collapse_next()) {
  }
  const double err = s.total_error();
  if (std::abs(err) > 1e-9) problems.push_back("flat grid error " + fmt("%.3e", err));
  TriangleMesh out = s.mesh();
  annotate_mesh(out, 40.0);
  double drift = 0.0;
  for (std::size_t v = 0; v < out.vertices.size(); ++v) {
    if (!out.boundary_flags[v]) continue;
    const Vec3& x = out.vertices[v];
    drift = std::max(drift, std::min({std::abs(x.x()), std::abs(x.y()), std::abs(x.x() - size),
                                      std::abs(x.y() - size)}) + std::abs(x.z()));
  }
  if (drift > 1e-6) problems.push_back("boundary drift " + fmt("%.3e", drift));

  std::string detail = "icosphere 1280 -> " + std::to_string(m.faces.size()) + " faces, max distance " +
                       fmt("%.3f%%", 100 * rel) + " of diagonal; flat grid -> " + std::to_string(s.face_count()) +
                       " faces, error " + fmt("%.1e", err) + ", boundary drift " + fmt("%.1e", drift);
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------- 6

Outcome densification_rules() {
  std::mt19937_64 g(66);
  std::size_t selection_mismatch = 0;
  for (int i = 0; i < 100; ++i) {
    const int w = 16 + static_cast<int>(g() % 400), h = 16 + static_cast<int>(g() % 400);
    ErrorImage e(w, h);
    for (float& v : e.values) v = static_cast<float>(testing::uniform(g, 0, 1));
    for (int k = 0; k < 8; ++k) {
      const int x0 = static_cast<int>(g() % w), y0 = static_cast<int>(g() % h);
      for (int y = y0; y < std::min(h, y0 + 24); ++y) {
        for (int x = x0; x < std::min(w, x0 + 24); ++x) e.at(x, y) *= 20.0f;
      }
    }
    const int ps = 1 + static_cast<int>(g() % 32);
    const PatchGrid p = select_patches(e, std::min({ps, w, h}));
    const ref::PatchSelection r = ref::select_patches(e, std::min({ps, w, h}));
    if (p.selected != r.selected || p.patch_mean != r.means || p.frame_mean != r.frame_mean) ++selection_mismatch;
  }

  ProxyGrid grid;
  grid.origin = Vec3(-1, -1, -1);
  grid.cell_size = 0.1;
  grid.capacity = 3;
  std::size_t admitted = 0;
  for (int i = 0; i < 100000; ++i) admitted += grid_insert(grid, testing::random_point(g, -1, 1));
  std::uint32_t max_occupancy = 0;
  for (const auto& [cell, n] : grid.occupancy) max_occupancy = std::max(max_occupancy, n);

  std::size_t planned = 0, outside = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSpec spec;
    spec.anchor_count = 0;
    spec.camera_count = 2;
    spec.width = 320;
    spec.height = 240;
    const SceneBundle b = generate_synthetic_scene(seed, spec);
    ProxyGrid shared = make_proxy_grid(b.proxy_mesh, b.config);
    for (std::size_t c = 0; c < b.cameras.size(); ++c) {
      const Camera& cam = b.cameras[c];
      ErrorImage e(cam.width, cam.height);
      for (float& v : e.values) v = static_cast<float>(testing::uniform(g, 0, 1));
      for (int k = 0; k < 30; ++k) {
        const int x0 = static_cast<int>(g() % cam.width), y0 = static_cast<int>(g() % cam.height);
        for (int y = y0; y < std::min(cam.height, y0 + 16); ++y) {
          for (int x = x0; x < std::min(cam.width, x0 + 16); ++x) e.at(x, y) *= 25.0f;
        }
      }
      const PatchGrid p = select_patches(e, b.config.patch_size);
      const DensificationPlan plan = plan_anchors(p, run_pipeline(b, c).depth, cam, shared,
                                                  static_cast<std::uint32_t>(c));
      for (const PlannedAnchor& a : plan.anchors) {
        ++planned;
        const NdcPoint q = project(cam, Vec3(a.position[0], a.position[1], a.position[2]), b.config.projection());
        const PixelCoord px = ndc_to_pixel(q, cam.width, cam.height);
        const auto ext = p.extent(a.patch_col, a.patch_row);
        if (!q.valid || px.x < ext[0] || px.x >= ext[2] || px.y < ext[1] || px.y >= ext[3]) ++outside;
      }
    }
    for (const auto& [cell, n] : shared.occupancy) max_occupancy = std::max(max_occupancy, n);
  }
  const bool ok = selection_mismatch == 0 && max_occupancy <= 4 && outside == 0 && planned > 0 &&
                  [&] {
                    for (const auto& [cell, n] : grid.occupancy) {
                      if (n > grid.capacity) return false;
                    }
                    return true;
                  }();
  return {ok, std::to_string(selection_mismatch) + " of 100 selections differ from the reference; max occupancy " +
                  std::to_string(max_occupancy) + " after 1e5 insertions (" + std::to_string(admitted) +
                  " admitted, K=3) and 20 planned frames (K=4); " + std::to_string(outside) + " of " +
                  std::to_string(planned) + " planned anchors reproject outside their patch"};
}

// ---------------------------------------------------------------- 7

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome performance() {
  SyntheticSpec spec;
  spec.box_subdiv = 12;
  spec.ground_subdiv = 100;
  spec.camera_count = 1;
  const SceneBundle b = generate_synthetic_scene(7, spec);
  const Camera& cam = b.cameras[0];
  const int cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto time_raster = [&](int workers) {
    RasterOptions o;
    o.workers = workers;
    std::vector<double> t;
    for (int i = 0; i < 12; ++i) {
      const auto t0 = Clock::now();
      const DepthMap d = rasterize_depth(b.proxy_mesh, cam, o);
      t.push_back(1e3 * seconds_since(t0));
    }
    return median(t);
  };
  const double serial = time_raster(1);
  const double parallel = time_raster(cores);
  std::vector<double> pipe;
  for (int i = 0; i < 12; ++i) {
    const auto t0 = Clock::now();
    const PipelineResult r = run_pipeline(b, 0, cores);
    pipe.push_back(1e3 * seconds_since(t0));
  }
  const double pipeline = median(pipe);
  std::string detail = std::to_string(b.proxy_mesh.face_count()) + " faces at 1000x1000, " +
                       std::to_string(b.anchors.count()) + " anchors: depth pass " + fmt("%.1f ms", serial) +
                       " single worker (< 50), " + fmt("%.1f ms", parallel) + " with " + std::to_string(cores) +
                       " workers (< 15), pipeline " + fmt("%.1f ms", pipeline) + " (< 60)";
  if (cores == 1) detail += "; this machine has one hardware thread, so no tile parallelism is available";
  return {serial < 50.0 && parallel < 15.0 && pipeline < 60.0, detail};
}

// ---------------------------------------------------------------- 8

struct CliRun {
  int code;
  std::string out;
};

CliRun cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "proxygs");
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str() + err.str()};
}

std::string strip_timings(const std::string& text) {
  try {
    io::json j = io::json::parse(text);
    std::function<void(io::json&)> strip = [&](io::json& x) {
      if (x.is_object()) {
        x.erase("timings");
        for (auto& [k, v] : x.items()) strip(v);
      } else if (x.is_array()) {
        for (auto& v : x) strip(v);
      }
    };
    strip(j);
    return j.dump();
  } catch (const io::json::exception&) {
    return text;
  }
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path root = testing::temp_dir("acceptance_determinism");
  // Inputs shared by every run.
  const fs::path inputs = root / "inputs";
  fs::create_directories(inputs);
  io::write_mesh(make_icosphere(3), inputs / "sphere.obj");
  io::FloatMap err{320, 240, {}};
  std::mt19937_64 g(8);
  for (int i = 0; i < 320 * 240; ++i) err.values.push_back(static_cast<float>(testing::uniform(g, 0, 1)));
  for (int y = 60; y < 120; ++y) {
    for (int x = 100; x < 200; ++x) err.values[y * 320 + x] *= 30.0f;
  }
  io::write_pfm(err, inputs / "err.pfm");
  const std::vector<std::string> gen = {"--seed", "7", "--anchors", "20000", "--cameras", "2", "--width", "320",
                                        "--height", "240"};

  std::vector<std::string> failures;
  std::map<std::string, std::string> baseline;
  int runs = 0;
  for (int workers : {1, 2, 4, 1}) {
    const fs::path dir = root / ("run" + std::to_string(runs++));
    fs::create_directories(dir);
    const std::string w = std::to_string(workers);
    const std::string scene = (dir / "scene" / "scene.json").string();
    std::vector<std::pair<std::string, std::vector<std::string>>> commands;
    std::vector<std::string> gen_cmd = {"gen-scene", "-o", (dir / "scene").string()};
    gen_cmd.insert(gen_cmd.end(), gen.begin(), gen.end());
    commands.push_back({"gen-scene", gen_cmd});
    commands.push_back({"simplify", {"simplify", "-i", (inputs / "sphere.obj").string(), "-o",
                                     (dir / "simple.ply").string(), "--target", "300"}});
    commands.push_back({"cluster", {"cluster", "-i", (inputs / "sphere.obj").string(), "-o",
                                    (dir / "sphere.clusters").string(), "--tau-min", "16", "--tau-max", "64"}});
    commands.push_back({"depth", {"depth", "-s", scene, "-c", "1", "-o", (dir / "depth.pfm").string()}});
    commands.push_back({"depth-raw", {"depth", "-s", scene, "-c", "1", "-o", (dir / "depth.bin").string()}});
    commands.push_back({"cull-anchors", {"cull-anchors", "-s", scene, "-c", "1", "-o", (dir / "mask.bin").string(),
                                         "--diagnose-operand"}});
    commands.push_back({"densify-plan", {"densify-plan", "-s", scene, "-c", "0", "-c", "1", "-e",
                                         (inputs / "err.pfm").string(), "-e", (inputs / "err.pfm").string(), "-o",
                                         (dir / "plan.bin").string()}});
    commands.push_back({"bench", {"bench", "-s", scene, "--frames", "2", "--warmup", "0"}});
    commands.push_back({"oracle", {"oracle", "-s", scene, "-c", "0"}});
    for (auto& [name, args] : commands) {
      args.insert(args.end(), {"--json", "--workers", w});
      const CliRun r = cli_run(args);
      if (r.code != 0) failures.push_back(name + " exited " + std::to_string(r.code));
      // Paths differ between runs; compare with the run directory blanked out.
      std::string text = strip_timings(r.out);
      for (std::size_t pos; (pos = text.find(dir.string())) != std::string::npos;) text.replace(pos, dir.string().size(), "<dir>");
      const std::string key = name + ":stdout";
      if (!baseline.count(key)) baseline[key] = text;
      else if (baseline[key] != text) failures.push_back(name + " output differs with " + w + " workers");
    }
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string key = fs::relative(entry.path(), dir).string();
      std::string bytes = file_bytes(entry.path());
      for (std::size_t pos; (pos = bytes.find(dir.string())) != std::string::npos;) bytes.replace(pos, dir.string().size(), "<dir>");
      if (!baseline.count(key)) baseline[key] = bytes;
      else if (baseline[key] != bytes) failures.push_back(key + " differs with " + w + " workers");
    }
  }
  std::size_t files = 0;
  for (const auto& [k, v] : baseline) files += k.find(":stdout") == std::string::npos;
  std::string detail = "9 commands x 4 runs (workers 1, 2, 4, 1), " + std::to_string(files) +
                       " output files compared byte for byte, timings excluded from stdout";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, anchor_filter_exactness}, {2, rasterizer_correctness}, {3, hiz_soundness}, {4, occlusion_effectiveness},
      {5, qem_quality},             {6, densification_rules},    {7, performance},   {8, determinism},
  };
  int failed = 0;
  for (const auto& [n, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s criterion %d: %s\n", o.passed ? "PASS" : "FAIL", n, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.passed;
  }
  return failed == 0 ? 0 : 1;
}
