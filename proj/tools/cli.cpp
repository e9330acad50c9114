#include "cli.hpp"

#include "proxygs/cluster.hpp"
#include "proxygs/densify.hpp"
#include "proxygs/depth_raster.hpp"
#include "proxygs/io.hpp"
#include "proxygs/reference.hpp"
#include "proxygs/scene.hpp"
#include "proxygs/simplify.hpp"
#include "proxygs/visibility.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <optional>
#include <ostream>

namespace proxygs::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigFlags {
  std::string config_file;
  std::optional<double> gamma, tau_near, epsilon, cell_size, lambda_b, feature_angle;
  std::optional<int> padding, level_c, patch_size, tau_min, tau_max;
  std::optional<std::uint32_t> capacity;

  void add(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file (overrides the scene's config)");
    app->add_option("--gamma", gamma, "depth safety margin");
    app->add_option("--tau-near", tau_near, "minimum clip w");
    app->add_option("--epsilon", epsilon, "homogeneous divide guard");
    app->add_option("--padding", padding, "screen-rect padding in pixels");
    app->add_option("--level-c", level_c, "Hi-Z level bias");
    app->add_option("--patch-size", patch_size, "densification patch size");
    app->add_option("--capacity", capacity, "anchors per grid cell");
    app->add_option("--cell-size", cell_size, "grid cell size (0 = diagonal / 512)");
    app->add_option("--lambda-b", lambda_b, "boundary constraint weight");
    app->add_option("--feature-angle", feature_angle, "feature edge angle in degrees");
    app->add_option("--tau-min", tau_min, "minimum cluster size");
    app->add_option("--tau-max", tau_max, "maximum cluster size");
  }

  Config resolve(Config c) const {
    if (!config_file.empty()) c = Config::from_json(io::read_json(config_file), c);
    if (gamma) c.gamma = *gamma;
    if (tau_near) c.tau_near = *tau_near;
    if (epsilon) c.epsilon = *epsilon;
    if (padding) c.padding = *padding;
    if (level_c) c.level_c = *level_c;
    if (patch_size) c.patch_size = *patch_size;
    if (capacity) c.capacity = *capacity;
    if (cell_size) c.cell_size = *cell_size;
    if (lambda_b) c.lambda_b = *lambda_b;
    if (feature_angle) c.feature_angle_deg = *feature_angle;
    if (tau_min) c.tau_min = *tau_min;
    if (tau_max) c.tau_max = *tau_max;
    const std::string bad = c.violations();
    if (!bad.empty()) throw UsageError("invalid config: " + bad);
    return c;
  }
};

struct Common {
  bool json = false;
  int workers = 0;
  ConfigFlags config;
};

void add_common(CLI::App* app, Common& c) {
  app->add_flag("--json", c.json, "print results as JSON");
  app->add_option("--workers", c.workers, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  c.config.add(app);
}

SceneBundle load_with_config(const std::string& manifest, const ConfigFlags& flags) {
  SceneBundle b = load_scene(manifest);
  const Config resolved = flags.resolve(b.config);
  if (resolved.to_json() != b.config.to_json()) b = load_scene(manifest, resolved);
  return b;
}

void check_camera(const SceneBundle& b, std::size_t index) {
  if (index >= b.cameras.size()) {
    throw UsageError("camera " + std::to_string(index) + " out of range (scene has " +
                     std::to_string(b.cameras.size()) + ")");
  }
}

json histogram_json(const CullMask& mask) {
  const auto h = mask.histogram();
  return {{"kept", h[0]}, {"culled_near", h[1]}, {"culled_offscreen", h[2]}, {"culled_occluded", h[3]}};
}

json stats_json(const FrameStats& s) {
  return {{"anchors_in", s.anchors_in},
          {"anchors_kept", s.anchors_kept},
          {"clusters_drawn", s.clusters_drawn},
          {"clusters_frustum_culled", s.clusters_frustum_culled},
          {"clusters_occlusion_culled", s.clusters_occlusion_culled}};
}

json timings_json(double depth, double filter, double total) {
  return {{"depth_ms", depth}, {"filter_ms", filter}, {"total_ms", total}};
}

void print(std::ostream& out, const json& result, bool as_json) {
  if (as_json) {
    out << result.dump(2) << "\n";
    return;
  }
  for (const auto& [key, value] : result.items()) {
    if (value.is_object()) {
      out << key << ":\n";
      for (const auto& [k, v] : value.items()) out << "  " << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    } else {
      out << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump()) << "\n";
    }
  }
}

// ---------------------------------------------------------------- verbs

json cmd_simplify(const std::string& input, const std::string& output, std::size_t target, const Common& c) {
  const Config cfg = c.config.resolve({});
  const TriangleMesh mesh = io::read_mesh(input);
  SimplifyOptions opt;
  opt.target_faces = target;
  opt.boundary_weight = cfg.lambda_b;
  opt.feature_angle_deg = cfg.feature_angle_deg;
  const SimplifyResult r = simplify(mesh, opt);
  io::write_mesh(r.mesh, output);
  return {{"faces_in", mesh.faces.size()},   {"faces_out", r.mesh.faces.size()},
          {"vertices_out", r.mesh.vertices.size()}, {"collapses", r.collapses},
          {"exhausted", r.exhausted},        {"output", output}};
}

json cmd_cluster(const std::string& input, const std::string& output, const Common& c) {
  const Config cfg = c.config.resolve({});
  const TriangleMesh mesh = io::read_mesh(input);
  const auto clusters = build_clusters(mesh, cfg.tau_min, cfg.tau_max);
  io::write_clusters(clusters, mesh.faces.size(), output);
  std::size_t smallest = clusters.empty() ? 0 : clusters.front().triangle_indices.size();
  std::size_t largest = 0;
  for (const auto& k : clusters) {
    smallest = std::min(smallest, k.triangle_indices.size());
    largest = std::max(largest, k.triangle_indices.size());
  }
  return {{"faces", mesh.faces.size()},
          {"clusters", clusters.size()},
          {"smallest", smallest},
          {"largest", largest},
          {"output", output}};
}

void write_depth_any(const DepthMap& d, const Camera& cam, const fs::path& path) {
  if (path.extension() == ".pfm") io::write_depth_pfm(d, path);
  else io::write_depth_raw(d, cam.near, cam.far, path);
}

json cmd_depth(const std::string& scene, std::size_t camera, const std::string& output, const Common& c) {
  const SceneBundle b = load_with_config(scene, c.config);
  check_camera(b, camera);
  const PipelineResult r = run_pipeline(b, camera, c.workers);
  write_depth_any(r.depth, b.cameras[camera], output);
  std::size_t covered = 0;
  for (float v : r.depth.values) covered += v != kBackgroundDepth;
  json out = stats_json(r.stats);
  out.erase("anchors_in");
  out.erase("anchors_kept");
  out["camera"] = camera;
  out["width"] = r.depth.width;
  out["height"] = r.depth.height;
  out["covered_pixels"] = covered;
  out["hiz_levels"] = r.pyramid.levels.size();
  out["output"] = output;
  out["timings"] = timings_json(r.stats.depth_ms, 0.0, r.stats.depth_ms);
  return out;
}

json cmd_cull(const std::string& scene, std::size_t camera, const std::string& depth_file, const std::string& output,
              bool diagnose, const Common& c) {
  const SceneBundle b = load_with_config(scene, c.config);
  check_camera(b, camera);
  const Camera& cam = b.cameras[camera];
  json out;
  CullMask mask;
  DepthMap depth;
  if (!depth_file.empty()) {
    depth = io::read_depth(depth_file);
    const auto t0 = std::chrono::steady_clock::now();
    mask = cull_anchors(b.anchors, cam, depth, b.config.gamma, b.config.projection(), c.workers);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out["timings"] = timings_json(0.0, ms, ms);
  } else {
    PipelineResult r = run_pipeline(b, camera, c.workers);
    mask = std::move(r.mask);
    depth = std::move(r.depth);
    out = stats_json(r.stats);
    out["timings"] = timings_json(r.stats.depth_ms, r.stats.filter_ms, r.stats.total_ms);
  }
  out["camera"] = camera;
  out["gamma"] = b.config.gamma;
  out["anchors"] = b.anchors.count();
  out["kept"] = mask.kept_count;
  out["verdicts"] = histogram_json(mask);
  if (diagnose) {
    const auto d = cull_anchors_operand_diagnostic(b.anchors, cam, depth, b.config.gamma, b.config.projection());
    out["operand_diagnostic"] = {{"tested", d.tested},
                                 {"view_culled", d.view_culled},
                                 {"clip_culled", d.clip_culled},
                                 {"disagreements", d.disagreements}};
  }
  if (!output.empty()) {
    io::write_cull_mask(mask, output);
    json summary = {{"camera", camera}, {"gamma", b.config.gamma}, {"anchors", b.anchors.count()},
                    {"counts", histogram_json(mask)}};
    io::write_json(summary, output + ".json");
    out["output"] = output;
  }
  return out;
}

json cmd_densify(const std::string& scene, const std::vector<std::size_t>& cameras_in,
                 const std::vector<std::string>& errors, const std::string& output, std::string provenance,
                 const Common& c) {
  const SceneBundle b = load_with_config(scene, c.config);
  std::vector<std::size_t> cameras = cameras_in;
  if (cameras.empty()) {
    for (std::size_t i = 0; i < errors.size(); ++i) cameras.push_back(i);
  }
  if (cameras.size() != errors.size()) {
    throw UsageError("got " + std::to_string(errors.size()) + " error images for " + std::to_string(cameras.size()) +
                     " cameras");
  }
  ProxyGrid grid = make_proxy_grid(b.proxy_mesh, b.config);
  std::vector<std::array<float, 3>> points;
  json anchors = json::array();
  json frames = json::array();
  for (std::size_t f = 0; f < cameras.size(); ++f) {
    check_camera(b, cameras[f]);
    const Camera& cam = b.cameras[cameras[f]];
    const ErrorImage err = io::read_error_image(errors[f]);
    if (err.width != cam.width || err.height != cam.height) {
      throw io::IoError(errors[f], "error image is " + std::to_string(err.width) + "x" + std::to_string(err.height) +
                                       ", camera is " + std::to_string(cam.width) + "x" + std::to_string(cam.height));
    }
    const PipelineResult r = run_pipeline(b, cameras[f], c.workers);
    const PatchGrid patches = select_patches(err, b.config.patch_size, c.workers);
    const auto plan = plan_anchors(patches, r.depth, cam, grid, static_cast<std::uint32_t>(cameras[f]));
    std::size_t selected = 0;
    for (auto s : patches.selected) selected += s;
    frames.push_back({{"camera", cameras[f]},
                      {"error_image", errors[f]},
                      {"frame_mean", patches.frame_mean},
                      {"threshold", patches.threshold()},
                      {"patches", patches.selected.size()},
                      {"selected", selected},
                      {"planned", plan.anchors.size()},
                      {"rejected", plan.rejected_count},
                      {"background_skipped", plan.background_skipped}});
    for (const auto& a : plan.anchors) {
      points.push_back(a.position);
      anchors.push_back({{"frame", a.frame_id},
                         {"patch", {a.patch_col, a.patch_row}},
                         {"pixel", {a.pixel_x, a.pixel_y}}});
    }
  }
  if (provenance.empty()) provenance = output + ".json";
  io::write_points(points, output);
  io::write_json({{"patch_size", b.config.patch_size},
                  {"capacity", grid.capacity},
                  {"cell_size", grid.cell_size},
                  {"origin", {grid.origin.x(), grid.origin.y(), grid.origin.z()}},
                  {"frames", frames},
                  {"anchors", anchors}},
                 provenance);
  return {{"planned", points.size()}, {"frames", frames}, {"output", output}, {"provenance", provenance}};
}

struct GenOptions {
  std::uint64_t seed = 0;
  SyntheticSpec spec;
};

void add_gen_options(CLI::App* app, GenOptions& g) {
  app->add_option("--seed", g.seed, "generator seed");
  app->add_option("--extent", g.spec.extent, "street length");
  app->add_option("--boxes", g.spec.box_count, "building count")->check(CLI::NonNegativeNumber);
  app->add_option("--anchors", g.spec.anchor_count, "anchor count");
  app->add_option("--cameras", g.spec.camera_count, "camera count")->check(CLI::PositiveNumber);
  app->add_option("--width", g.spec.width, "image width")->check(CLI::PositiveNumber);
  app->add_option("--height", g.spec.height, "image height")->check(CLI::PositiveNumber);
  app->add_option("--box-subdiv", g.spec.box_subdiv, "quads per box face side")->check(CLI::PositiveNumber);
  app->add_option("--ground-subdiv", g.spec.ground_subdiv, "ground cells per side")->check(CLI::PositiveNumber);
}

SceneBundle scene_or_generated(const std::string& scene, const GenOptions& g, const Common& c) {
  if (!scene.empty()) return load_with_config(scene, c.config);
  return generate_synthetic_scene(g.seed, g.spec, c.config.resolve({}));
}

json cmd_gen(const GenOptions& g, const std::string& output, const Common& c) {
  const SceneBundle b = generate_synthetic_scene(g.seed, g.spec, c.config.resolve({}));
  const fs::path manifest = save_scene(b, output);
  return {{"seed", g.seed},
          {"faces", b.proxy_mesh.faces.size()},
          {"clusters", b.clusters.size()},
          {"cameras", b.cameras.size()},
          {"anchors", b.anchors.count()},
          {"manifest", manifest.string()}};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json cmd_bench(const SceneBundle& b, std::size_t camera, int frames, int warmup, const Common& c) {
  check_camera(b, camera);
  std::vector<double> depth, filter, rest, total;
  FrameStats last;
  for (int i = 0; i < warmup + frames; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const PipelineResult r = run_pipeline(b, camera, c.workers);
    const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (i < warmup) continue;
    depth.push_back(r.stats.depth_ms);
    filter.push_back(r.stats.filter_ms);
    rest.push_back(std::max(0.0, wall - r.stats.depth_ms - r.stats.filter_ms));
    total.push_back(wall);
    last = r.stats;
  }
  const Camera& cam = b.cameras[camera];
  json out = stats_json(last);
  out["camera"] = camera;
  out["faces"] = b.proxy_mesh.faces.size();
  out["resolution"] = {cam.width, cam.height};
  out["frames"] = frames;
  const double d = median(depth), f = median(filter), r = median(rest), t = median(total);
  out["timings"] = {{"depth_ms", d},
                    {"filter_ms", f},
                    {"remainder_ms", r},
                    {"total_ms", t},
                    {"depth_share", t > 0 ? d / t : 0.0},
                    {"filter_share", t > 0 ? f / t : 0.0},
                    {"remainder_share", t > 0 ? r / t : 0.0}};
  return out;
}

json cmd_oracle(const SceneBundle& b, const std::vector<std::size_t>& cameras_in, const ref::OracleOptions& base,
                const std::string& inject, bool& all_passed) {
  std::vector<std::size_t> cameras = cameras_in;
  if (cameras.empty()) {
    for (std::size_t i = 0; i < b.cameras.size(); ++i) cameras.push_back(i);
  }
  json reports = json::array();
  all_passed = true;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    check_camera(b, cameras[i]);
    ref::OracleOptions opt = base;
    if (!inject.empty() && i == 0) opt.injected_depth = io::read_depth(inject);
    const auto report = ref::oracle_suite(b, cameras[i], opt);
    all_passed = all_passed && report.all_passed();
    json j = report.to_json();
    j["camera"] = cameras[i];
    reports.push_back(j);
  }
  return {{"all_passed", all_passed}, {"reports", reports}};
}

void print_oracle(std::ostream& out, const json& result) {
  for (const auto& r : result["reports"]) {
    out << "camera " << r["camera"].get<std::size_t>() << "\n";
    for (const auto& o : r["oracles"]) {
      const char* status = o["skipped"].get<bool>() ? "SKIP" : o["passed"].get<bool>() ? "PASS" : "FAIL";
      out << "  " << status << " " << o["name"].get<std::string>() << " (" << o["checked"].get<std::size_t>()
          << " checked)";
      const auto detail = o["detail"].get<std::string>();
      if (!detail.empty()) out << ": " << detail;
      out << "\n";
    }
  }
  out << (result["all_passed"].get<bool>() ? "all oracles passed" : "some oracles failed") << "\n";
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Proxy-mesh visibility culling for anchor-based Gaussian splatting"};
  app.require_subcommand(1);

  Common common;
  std::string input, output, scene, depth_file, provenance, inject;
  std::size_t target = 0, camera = 0;
  std::vector<std::size_t> cameras;
  std::vector<std::string> errors;
  bool diagnose = false;
  int frames = 100, warmup = 5;
  GenOptions gen;
  ref::OracleOptions oracle;

  auto* simplify_cmd = app.add_subcommand("simplify", "QEM-simplify a mesh to a target face count");
  simplify_cmd->add_option("--input,-i", input, "input mesh (.obj/.ply)")->required();
  simplify_cmd->add_option("--output,-o", output, "output mesh (.obj/.ply)")->required();
  simplify_cmd->add_option("--target", target, "target face count")->required();
  add_common(simplify_cmd, common);

  auto* cluster_cmd = app.add_subcommand("cluster", "partition a mesh into clusters");
  cluster_cmd->add_option("--input,-i", input, "input mesh")->required();
  cluster_cmd->add_option("--output,-o", output, "cluster file")->required();
  add_common(cluster_cmd, common);

  auto* depth_cmd = app.add_subcommand("depth", "render the proxy depth map for one camera");
  depth_cmd->add_option("--scene,-s", scene, "scene manifest")->required();
  depth_cmd->add_option("--camera,-c", camera, "camera index");
  depth_cmd->add_option("--output,-o", output, "depth file (.pfm, otherwise raw float32 + .json)")->required();
  add_common(depth_cmd, common);

  auto* cull_cmd = app.add_subcommand("cull-anchors", "filter anchors against the proxy depth");
  cull_cmd->add_option("--scene,-s", scene, "scene manifest")->required();
  cull_cmd->add_option("--camera,-c", camera, "camera index");
  cull_cmd->add_option("--depth", depth_file, "use this depth map instead of rendering one");
  cull_cmd->add_option("--output,-o", output, "verdict file (one byte per anchor, plus .json summary)");
  cull_cmd->add_flag("--diagnose-operand", diagnose, "count verdicts that change with clip-space depth");
  add_common(cull_cmd, common);

  auto* densify_cmd = app.add_subcommand("densify-plan", "plan new anchors from per-frame error images");
  densify_cmd->add_option("--scene,-s", scene, "scene manifest")->required();
  densify_cmd->add_option("--camera,-c", cameras, "camera index per error image (default 0, 1, ...)");
  densify_cmd->add_option("--error,-e", errors, "error image (.pfm), one per camera")->required();
  densify_cmd->add_option("--output,-o", output, "planned points (float32 xyz)")->required();
  densify_cmd->add_option("--provenance", provenance, "provenance JSON (default <output>.json)");
  add_common(densify_cmd, common);

  auto* bench_cmd = app.add_subcommand("bench", "median per-stage frame timings");
  bench_cmd->add_option("--scene,-s", scene, "scene manifest (default: generated scene)");
  bench_cmd->add_option("--camera,-c", camera, "camera index");
  bench_cmd->add_option("--frames", frames, "timed frames")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", warmup, "untimed frames")->check(CLI::NonNegativeNumber);
  add_gen_options(bench_cmd, gen);
  add_common(bench_cmd, common);

  auto* gen_cmd = app.add_subcommand("gen-scene", "write a synthetic street scene");
  gen_cmd->add_option("--output,-o", output, "output directory")->required();
  add_gen_options(gen_cmd, gen);
  add_common(gen_cmd, common);

  auto* oracle_cmd = app.add_subcommand("oracle", "check the fast paths against brute-force references");
  oracle_cmd->add_option("--scene,-s", scene, "scene manifest (default: generated scene)");
  oracle_cmd->add_option("--camera,-c", cameras, "camera indices (default: all)");
  oracle_cmd->add_option("--max-triangles", oracle.max_triangles, "ray-cast face limit");
  oracle_cmd->add_option("--max-resolution", oracle.max_resolution, "ray-cast image size")
      ->check(CLI::PositiveNumber);
  oracle_cmd->add_option("--inject-depth", inject, "depth map handed to the fast filter of the first camera");
  add_gen_options(oracle_cmd, gen);
  add_common(oracle_cmd, common);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  try {
    oracle.workers = common.workers;
    json result;
    bool ok = true;
    if (*simplify_cmd) result = cmd_simplify(input, output, target, common);
    else if (*cluster_cmd) result = cmd_cluster(input, output, common);
    else if (*depth_cmd) result = cmd_depth(scene, camera, output, common);
    else if (*cull_cmd) result = cmd_cull(scene, camera, depth_file, output, diagnose, common);
    else if (*densify_cmd) result = cmd_densify(scene, cameras, errors, output, provenance, common);
    else if (*gen_cmd) result = cmd_gen(gen, output, common);
    else if (*bench_cmd) result = cmd_bench(scene_or_generated(scene, gen, common), camera, frames, warmup, common);
    else if (*oracle_cmd) {
      result = cmd_oracle(scene_or_generated(scene, gen, common), cameras, oracle, inject, ok);
      if (common.json) print(out, result, true);
      else print_oracle(out, result);
      return ok ? 0 : 1;
    }
    print(out, result, common.json);
    return 0;
  } catch (const UsageError& e) {
    report_error(err, "usage", e.what());
    return 2;
  } catch (const io::IoError& e) {
    report_error(err, "input", e.what());
    return 1;
  } catch (const SceneError& e) {
    report_error(err, "input", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    report_error(err, "usage", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(err, "runtime", e.what());
    return 1;
  }
}

}  // namespace proxygs::cli
