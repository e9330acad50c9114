#pragma once

#include "proxygs/cluster.hpp"
#include "proxygs/densify.hpp"
#include "proxygs/depth_raster.hpp"
#include "proxygs/geometry.hpp"
#include "proxygs/mesh.hpp"
#include "proxygs/visibility.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace proxygs::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Parse or I/O failure. The message starts with "path:line:" when a line is known.
class IoError : public std::runtime_error {
 public:
  IoError(const fs::path& path, const std::string& what, std::size_t line = 0);
};

// Meshes. OBJ (v / f, polygons fan-triangulated, negative indices allowed)
// and PLY (ascii, binary_little_endian, binary_big_endian).
TriangleMesh read_obj(const fs::path& path);
void write_obj(const TriangleMesh& mesh, const fs::path& path);
TriangleMesh read_ply(const fs::path& path);
/// Binary little-endian PLY with double vertices.
void write_ply(const TriangleMesh& mesh, const fs::path& path);
/// Dispatches on the extension (.obj / .ply).
TriangleMesh read_mesh(const fs::path& path);
void write_mesh(const TriangleMesh& mesh, const fs::path& path);

// Cameras. Row-major matrices. Keys: view_matrix, proj_matrix, rotation,
// center, intrinsics, near, far, width, height. A camera given only by
// rotation/center/intrinsics gets V and P built from them. "convention":
// "opengl" marks a view matrix looking down -z with y up; it is converted.
Camera camera_from_json(const json& j);
json camera_to_json(const Camera& camera);
/// Accepts {"cameras": [...]}, a bare array or a single camera object.
std::vector<Camera> read_cameras(const fs::path& path);
void write_cameras(const std::vector<Camera>& cameras, const fs::path& path);

// Float maps.
struct FloatMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, row 0 at the top
};
/// Grayscale PFM ("Pf"), little-endian (negative scale), rows stored bottom-to-top.
void write_pfm(const FloatMap& map, const fs::path& path);
FloatMap read_pfm(const fs::path& path);

void write_depth_pfm(const DepthMap& depth, const fs::path& path);
DepthMap read_depth_pfm(const fs::path& path);

/// Raw little-endian float32, row 0 first, plus `<path>.json` with
/// width, height, near, far.
void write_depth_raw(const DepthMap& depth, double near, double far, const fs::path& path);
DepthMap read_depth_raw(const fs::path& path);

/// Reads .pfm or raw+sidecar depending on the extension.
DepthMap read_depth(const fs::path& path);
ErrorImage read_error_image(const fs::path& path);

// Cluster sidecar: "PGCL", u32 version, u32 cluster count, u64 face count,
// then per cluster u32 n, 6 x f64 AABB (min xyz, max xyz), n x u32 face index.
inline constexpr std::uint32_t kClusterFormatVersion = 1;
void write_clusters(const std::vector<Cluster>& clusters, std::size_t face_count, const fs::path& path);
/// Validates the partition against `face_count` when it is nonzero.
std::vector<Cluster> read_clusters(const fs::path& path, std::size_t face_count = 0);

// Point lists: packed little-endian float32 triples.
void write_points(const std::vector<std::array<float, 3>>& points, const fs::path& path);
std::vector<std::array<float, 3>> read_points(const fs::path& path);

/// One byte per anchor (the Verdict value).
void write_cull_mask(const CullMask& mask, const fs::path& path);
CullMask read_cull_mask(const fs::path& path);

json read_json(const fs::path& path);
/// Writes `j` with 2-space indentation and a trailing newline.
void write_json(const json& j, const fs::path& path);

}  // namespace proxygs::io
