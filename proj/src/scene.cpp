#include "proxygs/scene.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace proxygs {

namespace fs = std::filesystem;
using io::json;

// ---------------------------------------------------------------- config

std::string Config::violations() const {
  std::ostringstream out;
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) out << "gamma must be finite and >= 0\n";
  if (!(tau_near >= 0.0)) out << "tau_near must be >= 0\n";
  if (!(epsilon >= 0.0)) out << "epsilon must be >= 0\n";
  if (padding != 0 && padding != 1) out << "padding must be 0 or 1\n";
  if (level_c != 1 && level_c != 2) out << "level_c must be 1 or 2\n";
  if (patch_size < 1) out << "patch_size must be >= 1\n";
  if (capacity < 1) out << "capacity must be >= 1\n";
  if (!(cell_size >= 0.0)) out << "cell_size must be >= 0 (0 selects the default)\n";
  if (!(lambda_b >= 0.0)) out << "lambda_b must be >= 0\n";
  if (!(feature_angle_deg >= 0.0 && feature_angle_deg <= 180.0)) out << "feature_angle_deg must be in [0, 180]\n";
  if (tau_min < 1 || tau_min > tau_max) out << "need 1 <= tau_min <= tau_max\n";
  std::string s = out.str();
  if (!s.empty()) s.pop_back();
  return s;
}

Config Config::from_json(const json& j, const Config& base) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  Config c = base;
  for (const auto& [key, value] : j.items()) {
    auto num = [&](auto& field) {
      if (!value.is_number()) throw std::invalid_argument("config key '" + key + "' must be a number");
      using T = std::remove_reference_t<decltype(field)>;
      if constexpr (std::is_integral_v<T>) {
        if (!value.is_number_integer()) throw std::invalid_argument("config key '" + key + "' must be an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (value.get<std::int64_t>() < 0) throw std::invalid_argument("config key '" + key + "' must be >= 0");
        }
      }
      field = value.get<T>();
    };
    if (key == "gamma") num(c.gamma);
    else if (key == "tau_near") num(c.tau_near);
    else if (key == "epsilon") num(c.epsilon);
    else if (key == "padding") num(c.padding);
    else if (key == "level_c") num(c.level_c);
    else if (key == "patch_size") num(c.patch_size);
    else if (key == "capacity") num(c.capacity);
    else if (key == "cell_size") num(c.cell_size);
    else if (key == "lambda_b") num(c.lambda_b);
    else if (key == "feature_angle_deg") num(c.feature_angle_deg);
    else if (key == "tau_min") num(c.tau_min);
    else if (key == "tau_max") num(c.tau_max);
    else throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return c;
}

Config Config::from_json(const json& j) { return from_json(j, Config{}); }

json Config::to_json() const {
  return json{{"gamma", gamma},       {"tau_near", tau_near},     {"epsilon", epsilon},
              {"padding", padding},   {"level_c", level_c},       {"patch_size", patch_size},
              {"capacity", capacity}, {"cell_size", cell_size},   {"lambda_b", lambda_b},
              {"feature_angle_deg", feature_angle_deg},           {"tau_min", tau_min},
              {"tau_max", tau_max}};
}

// ---------------------------------------------------------------- bundle I/O

std::string bundle_violations(const SceneBundle& b) {
  std::ostringstream out;
  if (std::string v = b.config.violations(); !v.empty()) out << "config: " << v << "\n";
  if (std::string v = mesh_violations(b.proxy_mesh); !v.empty()) out << "mesh: " << v << "\n";
  if (b.cameras.empty()) out << "cameras: at least one camera is required\n";
  for (std::size_t i = 0; i < b.cameras.size(); ++i) {
    if (std::string v = camera_violations(b.cameras[i]); !v.empty()) out << "cameras[" << i << "]: " << v << "\n";
  }
  for (std::size_t i = 0; i < b.anchors.count(); ++i) {
    const auto& p = b.anchors.positions[i];
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      out << "anchors[" << i << "]: non-finite coordinate\n";
    }
  }
  const std::size_t faces = b.proxy_mesh.faces.size();
  std::vector<std::uint8_t> seen(faces, 0);
  for (std::size_t k = 0; k < b.clusters.size(); ++k) {
    const Cluster& c = b.clusters[k];
    for (auto f : c.triangle_indices) {
      if (f >= faces) {
        out << "clusters[" << k << "]: face " << f << " out of range\n";
        continue;
      }
      if (seen[f]++) out << "clusters[" << k << "]: face " << f << " already in another cluster\n";
      for (auto v : b.proxy_mesh.faces[f]) {
        if (v >= b.proxy_mesh.vertices.size()) continue;
        const Vec3& x = b.proxy_mesh.vertices[v];
        if ((x.array() < c.aabb_min.array()).any() || (x.array() > c.aabb_max.array()).any()) {
          out << "clusters[" << k << "]: AABB does not contain vertex " << v << "\n";
          break;
        }
      }
    }
  }
  const auto covered = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
  if (covered != faces && !b.clusters.empty()) out << "clusters: cover " << covered << " of " << faces << " faces\n";
  if (b.clusters.empty() && faces > 0) out << "clusters: none for a non-empty mesh\n";
  std::string s = out.str();
  if (!s.empty()) s.pop_back();
  return s;
}

SceneBundle load_scene(const fs::path& manifest, const std::optional<Config>& config_override) {
  SceneBundle b;
  std::vector<std::string> problems;
  json m;
  try {
    m = io::read_json(manifest);
  } catch (const std::exception& e) {
    throw SceneError(e.what());
  }
  const fs::path base = manifest.parent_path();
  auto path_of = [&](const char* key) -> std::optional<fs::path> {
    if (!m.contains(key)) return std::nullopt;
    if (!m[key].is_string()) {
      problems.push_back(manifest.string() + ": key '" + key + "' must be a path string");
      return std::nullopt;
    }
    return base / m[key].get<std::string>();
  };

  if (config_override) {
    b.config = *config_override;
  } else if (m.contains("config")) {
    try {
      b.config = m["config"].is_string() ? Config::from_json(io::read_json(base / m["config"].get<std::string>()))
                                         : Config::from_json(m["config"]);
    } catch (const std::exception& e) {
      problems.push_back(manifest.string() + ": config: " + e.what());
    }
  }
  auto attempt = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      problems.push_back(e.what());
    }
  };
  if (auto p = path_of("mesh")) {
    attempt([&] { b.proxy_mesh = io::read_mesh(*p); });
  } else {
    problems.push_back(manifest.string() + ": missing key 'mesh'");
  }
  if (auto p = path_of("cameras")) {
    attempt([&] { b.cameras = io::read_cameras(*p); });
  } else {
    problems.push_back(manifest.string() + ": missing key 'cameras'");
  }
  if (auto p = path_of("anchors")) attempt([&] { b.anchors.positions = io::read_points(*p); });
  const bool mesh_ok = problems.empty() || mesh_violations(b.proxy_mesh).empty();
  if (auto p = path_of("clusters")) {
    attempt([&] { b.clusters = io::read_clusters(*p, b.proxy_mesh.faces.size()); });
  } else if (mesh_ok && b.config.violations().empty()) {
    b.clusters = build_clusters(b.proxy_mesh, b.config.tau_min, b.config.tau_max);
  }
  if (problems.empty()) {
    if (std::string v = bundle_violations(b); !v.empty()) problems.push_back(v);
  }
  if (!problems.empty()) {
    std::string msg = "scene " + manifest.string() + " is invalid:";
    for (const auto& p : problems) msg += "\n" + p;
    throw SceneError(msg);
  }
  return b;
}

fs::path save_scene(const SceneBundle& b, const fs::path& dir) {
  fs::create_directories(dir);
  io::write_mesh(b.proxy_mesh, dir / "proxy.ply");
  io::write_clusters(b.clusters, b.proxy_mesh.faces.size(), dir / "proxy.clusters");
  io::write_cameras(b.cameras, dir / "cameras.json");
  io::write_points(b.anchors.positions, dir / "anchors.bin");
  const fs::path manifest = dir / "scene.json";
  io::write_json(json{{"mesh", "proxy.ply"},
                      {"clusters", "proxy.clusters"},
                      {"cameras", "cameras.json"},
                      {"anchors", "anchors.bin"},
                      {"config", b.config.to_json()}},
                 manifest);
  return manifest;
}

// ---------------------------------------------------------------- generator

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // 53 random bits -> [0, 1); spelled out because the standard distributions
  // are not reproducible across library implementations.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::mt19937_64 engine_;
};

TriangleMesh make_ground(double x0, double x1, double z0, double z1, int n) {
  TriangleMesh g;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      g.vertices.emplace_back(x0 + (x1 - x0) * i / n, 0.0, z0 + (z1 - z0) * j / n);
    }
  }
  auto id = [n](int i, int j) { return static_cast<std::uint32_t>(j * (n + 1) + i); };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      // Winding chosen so normals point up (+y).
      g.faces.push_back({id(i, j), id(i, j + 1), id(i + 1, j)});
      g.faces.push_back({id(i + 1, j), id(i, j + 1), id(i + 1, j + 1)});
    }
  }
  return g;
}

struct Box {
  Vec3 lo, hi;
};

}  // namespace

SceneBundle generate_synthetic_scene(std::uint64_t seed, const SyntheticSpec& spec, const Config& config) {
  if (spec.box_count < 0 || spec.camera_count < 1 || spec.width < 1 || spec.height < 1 || spec.box_subdiv < 1 ||
      spec.ground_subdiv < 1 || !(spec.extent > 0.0)) {
    throw std::invalid_argument("generate_synthetic_scene: invalid spec");
  }
  Rng rng(seed);
  const double e = spec.extent;
  const double s = e / 200.0;  // scale relative to a 200-unit street
  const double street_half = 8.0 * s;

  SceneBundle b;
  b.config = config;
  b.proxy_mesh = make_ground(-0.5 * e, 0.5 * e, -0.1 * e, 1.1 * e, spec.ground_subdiv);

  std::vector<Box> boxes;
  for (int k = 0; k < spec.box_count; ++k) {
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double wx = rng.uniform(8.0, 20.0) * s;
    const double wz = rng.uniform(8.0, 20.0) * s;
    const double h = rng.uniform(10.0, 40.0) * s;
    const double inner = street_half + rng.uniform(0.0, 60.0) * s;
    const double z0 = rng.uniform(0.0, e - wz);
    Box box;
    if (side > 0) {
      box.lo = Vec3(inner, 0.0, z0);
      box.hi = Vec3(inner + wx, h, z0 + wz);
    } else {
      box.lo = Vec3(-inner - wx, 0.0, z0);
      box.hi = Vec3(-inner, h, z0 + wz);
    }
    boxes.push_back(box);
    append_mesh(b.proxy_mesh, make_box(box.lo, box.hi, spec.box_subdiv));
  }

  const std::size_t near_count = spec.anchor_count / 2;
  b.anchors.positions.reserve(spec.anchor_count);
  auto push = [&](const Vec3& p) {
    b.anchors.positions.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())});
  };
  for (std::size_t i = 0; i < near_count; ++i) {
    const double offset = rng.uniform(-0.2, 0.5) * s;
    if (boxes.empty() || rng.uniform() < 0.2) {
      push(Vec3(rng.uniform(-0.5 * e, 0.5 * e), offset, rng.uniform(-0.1 * e, 1.1 * e)));
      continue;
    }
    const Box& box = boxes[rng.index(boxes.size())];
    // One of the four walls or the roof.
    const std::size_t face = rng.index(5);
    const double u = rng.uniform();
    const double v = rng.uniform();
    Vec3 p;
    const Vec3 d = box.hi - box.lo;
    switch (face) {
      case 0: p = Vec3(box.lo.x() - offset, box.lo.y() + v * d.y(), box.lo.z() + u * d.z()); break;
      case 1: p = Vec3(box.hi.x() + offset, box.lo.y() + v * d.y(), box.lo.z() + u * d.z()); break;
      case 2: p = Vec3(box.lo.x() + u * d.x(), box.lo.y() + v * d.y(), box.lo.z() - offset); break;
      case 3: p = Vec3(box.lo.x() + u * d.x(), box.lo.y() + v * d.y(), box.hi.z() + offset); break;
      default: p = Vec3(box.lo.x() + u * d.x(), box.hi.y() + offset, box.lo.z() + v * d.z()); break;
    }
    push(p);
  }
  for (std::size_t i = near_count; i < spec.anchor_count; ++i) {
    push(Vec3(rng.uniform(-0.5 * e, 0.5 * e), rng.uniform(0.0, 50.0 * s), rng.uniform(0.0, e)));
  }

  for (int c = 0; c < spec.camera_count; ++c) {
    const double z = e * (0.02 + 0.4 * c / spec.camera_count);
    const double x = rng.uniform(-0.3, 0.3) * street_half;
    const Vec3 eye(x, 1.7 * s, z);
    const Vec3 target(x + rng.uniform(-0.05, 0.05) * e, 1.7 * s, z + 0.25 * e);
    b.cameras.push_back(
        Camera::look_at(eye, target, Vec3(0.0, 1.0, 0.0), 60.0, 0.5 * s, 1.5 * e, spec.width, spec.height));
  }

  b.clusters = build_clusters(b.proxy_mesh, config.tau_min, config.tau_max);
  return b;
}

ProxyGrid make_proxy_grid(const TriangleMesh& proxy, const Config& config) {
  const auto [lo, hi] = mesh_bounds(proxy);
  ProxyGrid g = default_proxy_grid(lo, hi);
  if (config.cell_size > 0.0) g.cell_size = config.cell_size;
  g.capacity = config.capacity;
  return g;
}

// ---------------------------------------------------------------- pipeline

PipelineResult run_pipeline(const SceneBundle& b, std::size_t camera_index, int workers) {
  if (camera_index >= b.cameras.size()) {
    throw std::out_of_range("camera index " + std::to_string(camera_index) + " out of range (scene has " +
                            std::to_string(b.cameras.size()) + " cameras)");
  }
  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
  const Camera& cam = b.cameras[camera_index];
  const Config& cfg = b.config;
  PipelineResult r;

  const auto t0 = clock::now();
  r.frustum_culled = frustum_cull(b.clusters, extract_frustum(cam), workers);
  std::vector<std::uint8_t> draw(b.clusters.size());
  for (std::size_t k = 0; k < draw.size(); ++k) draw[k] = r.frustum_culled[k] ? 0 : 1;
  RasterOptions ro;
  ro.workers = workers;
  r.depth = b.clusters.empty() ? rasterize_depth(b.proxy_mesh, cam, ro)
                               : rasterize_clusters(b.proxy_mesh, b.clusters, cam, draw, ro);
  r.pyramid = build_hiz(r.depth, workers);
  r.occluded = occlusion_cull_clusters(b.clusters, cam, r.pyramid, OcclusionParams{cfg.level_c, cfg.padding}, workers);
  for (std::size_t k = 0; k < draw.size(); ++k) {
    if (!draw[k]) r.occluded[k] = 0;
  }
  const auto t1 = clock::now();
  r.mask = cull_anchors(b.anchors, cam, r.depth, cfg.gamma, cfg.projection(), workers);
  const auto t2 = clock::now();

  FrameStats& st = r.stats;
  st.depth_ms = ms(t1 - t0);
  st.filter_ms = ms(t2 - t1);
  st.total_ms = ms(t2 - t0);
  st.anchors_in = b.anchors.count();
  st.anchors_kept = r.mask.kept_count;
  for (std::size_t k = 0; k < draw.size(); ++k) {
    if (r.frustum_culled[k]) ++st.clusters_frustum_culled;
    else if (r.occluded[k]) ++st.clusters_occlusion_culled;
    else ++st.clusters_drawn;
  }
  return r;
}

}  // namespace proxygs
