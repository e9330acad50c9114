#pragma once

// Helpers shared by the test binaries.

#include "proxygs/geometry.hpp"
#include "proxygs/mesh.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

using proxygs::Camera;
using proxygs::Vec3;

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline Vec3 random_point(std::mt19937_64& g, double lo, double hi) {
  return {uniform(g, lo, hi), uniform(g, lo, hi), uniform(g, lo, hi)};
}

/// Camera at the origin looking down +z.
inline Camera forward_camera(double fov, double near, double far, int w, int h) {
  return Camera::look_at(Vec3::Zero(), Vec3(0, 0, 1), Vec3(0, -1, 0), fov, near, far, w, h);
}

/// Random triangles in front of a forward camera, 8 to 40 units away.
inline proxygs::TriangleMesh random_triangles(std::mt19937_64& g, int count) {
  proxygs::TriangleMesh m;
  for (int i = 0; i < count; ++i) {
    const Vec3 c(uniform(g, -15, 15), uniform(g, -15, 15), uniform(g, 8, 40));
    for (int k = 0; k < 3; ++k) m.vertices.push_back(c + random_point(g, -6, 6));
    const auto b = static_cast<std::uint32_t>(3 * i);
    m.faces.push_back({b, b + 1, b + 2});
  }
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("proxygs_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
