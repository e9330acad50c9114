#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace proxygs {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Constants of the homogeneous divide. Defaults follow the anchor filter:
/// the divide uses w + epsilon and any point with w <= tau_near is rejected.
struct ProjectionParams {
  double epsilon = 1e-7;
  double tau_near = 1e-4;
};

/// Pinhole camera. View space looks down +z with y pointing down and x right,
/// so view-space depth is positive in front of the camera. Pixel (0,0) is the
/// top-left pixel. The intrinsics put integer (u,v) on pixel centres; the
/// projection matrix maps that centre to NDC so that floor((x_ndc+1)/2*W) == u.
struct Camera {
  Mat4 view = Mat4::Identity();   // world -> view
  Mat4 proj = Mat4::Identity();   // view -> clip
  Mat3 rotation = Mat3::Identity();  // world -> camera rotation
  Vec3 center = Vec3::Zero();     // camera origin in world units
  Mat3 intrinsics = Mat3::Identity();
  double near = 0.1;
  double far = 1000.0;
  int width = 1;
  int height = 1;

  /// Builds V and P from (rotation, center, intrinsics, near, far, W, H).
  static Camera from_intrinsics(const Mat3& rotation, const Vec3& center, const Mat3& intrinsics,
                                double near, double far, int width, int height);

  /// Camera at `eye` looking at `target`. `up` is a world-space hint.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg,
                        double near, double far, int width, int height);
};

/// Returns an empty string when the camera satisfies its invariants,
/// otherwise a message naming every violated one.
std::string camera_violations(const Camera& camera);

/// Throws std::invalid_argument on violations.
void validate_camera(const Camera& camera);

/// Perspective matrix (view -> clip) for the intrinsics/near/far/viewport,
/// with z_ndc in [0,1] between the near and far planes.
Mat4 projection_from_intrinsics(const Mat3& intrinsics, double near, double far, int width, int height);

/// Pinhole intrinsics with the given vertical field of view and square pixels,
/// principal point at the image centre.
Mat3 intrinsics_from_fov(double fov_y_deg, int width, int height);

struct NdcPoint {
  double x_ndc = 0.0;
  double y_ndc = 0.0;
  double z_ndc = 0.0;
  double z_clip = 0.0;
  double w_clip = 0.0;
  double view_depth = 0.0;  // third component of V*[p;1]
  bool valid = false;
};

struct PixelCoord {
  std::int64_t x = 0;
  std::int64_t y = 0;
  bool in_bounds = false;
};

/// M*p for a homogeneous point, summed left to right. Shared by every path
/// that must agree bit-for-bit.
inline Vec4 transform_point(const Mat4& m, double x, double y, double z, double w) {
  return {m(0, 0) * x + m(0, 1) * y + m(0, 2) * z + m(0, 3) * w,
          m(1, 0) * x + m(1, 1) * y + m(1, 2) * z + m(1, 3) * w,
          m(2, 0) * x + m(2, 1) * y + m(2, 2) * z + m(2, 3) * w,
          m(3, 0) * x + m(3, 1) * y + m(3, 2) * z + m(3, 3) * w};
}

/// World point -> view -> clip -> NDC. Never throws; points at or behind
/// w = tau_near come back with valid = false.
NdcPoint project(const Camera& camera, const Vec3& p_world, const ProjectionParams& params = {});

PixelCoord ndc_to_pixel(const NdcPoint& ndc, int width, int height);

/// Hardware depth in [0,1] -> linear view-space depth.
/// Throws std::domain_error if the denominator is not positive.
double linearize_depth(double z_hw, double near, double far);

/// Linear view-space depth -> hardware depth. Inverse of linearize_depth.
double hardware_depth(double view_depth, double near, double far);

/// o + R^T (depth * K^-1 [u v 1]^T). Throws std::domain_error if K is singular.
Vec3 back_project(const Camera& camera, int u, int v, double depth_linear);

/// Combined P*V.
Mat4 view_projection(const Camera& camera);

}  // namespace proxygs
