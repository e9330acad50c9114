#include "proxygs/geometry.hpp"

#include <Eigen/LU>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace proxygs {

Mat4 projection_from_intrinsics(const Mat3& k, double near, double far, int width, int height) {
  const double w = width;
  const double h = height;
  Mat4 p = Mat4::Zero();
  // Continuous pixel coordinate s = K*[x/z, y/z, 1] + 0.5 and x_ndc = 2s/W - 1.
  p(0, 0) = 2.0 * k(0, 0) / w;
  p(0, 1) = 2.0 * k(0, 1) / w;
  p(0, 2) = 2.0 * (k(0, 2) + 0.5) / w - 1.0;
  p(1, 1) = 2.0 * k(1, 1) / h;
  p(1, 2) = 2.0 * (k(1, 2) + 0.5) / h - 1.0;
  p(2, 2) = far / (far - near);
  p(2, 3) = -near * far / (far - near);
  p(3, 2) = 1.0;
  return p;
}

Mat3 intrinsics_from_fov(double fov_y_deg, int width, int height) {
  const double half = 0.5 * fov_y_deg * std::numbers::pi / 180.0;
  const double focal = 0.5 * height / std::tan(half);
  Mat3 k = Mat3::Identity();
  k(0, 0) = focal;
  k(1, 1) = focal;
  k(0, 2) = 0.5 * width - 0.5;
  k(1, 2) = 0.5 * height - 0.5;
  return k;
}

Camera Camera::from_intrinsics(const Mat3& rotation, const Vec3& center, const Mat3& intrinsics,
                               double near, double far, int width, int height) {
  Camera cam;
  cam.rotation = rotation;
  cam.center = center;
  cam.intrinsics = intrinsics;
  cam.near = near;
  cam.far = far;
  cam.width = width;
  cam.height = height;
  cam.view = Mat4::Identity();
  cam.view.topLeftCorner<3, 3>() = rotation;
  cam.view.topRightCorner<3, 1>() = -(rotation * center);
  cam.proj = projection_from_intrinsics(intrinsics, near, far, width, height);
  return cam;
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_deg,
                       double near, double far, int width, int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  return from_intrinsics(r, eye, intrinsics_from_fov(fov_y_deg, width, height), near, far, width,
                         height);
}

std::string camera_violations(const Camera& cam) {
  std::ostringstream out;
  if (!(cam.near > 0.0)) out << "near > 0 violated (near=" << cam.near << "); ";
  if (!(cam.far > cam.near)) out << "far > near violated (near=" << cam.near << ", far=" << cam.far << "); ";
  if (cam.width < 1) out << "width >= 1 violated (width=" << cam.width << "); ";
  if (cam.height < 1) out << "height >= 1 violated (height=" << cam.height << "); ";
  if (!cam.view.allFinite() || !cam.proj.allFinite() || !cam.rotation.allFinite() ||
      !cam.center.allFinite() || !cam.intrinsics.allFinite()) {
    out << "camera matrices must be finite; ";
  } else {
    const Vec4 origin = cam.view * Vec4(cam.center.x(), cam.center.y(), cam.center.z(), 1.0);
    const double scale = 1.0 + cam.center.norm();
    const bool origin_ok = origin.head<3>().norm() <= 1e-9 * scale && std::abs(origin.w() - 1.0) <= 1e-12;
    const bool rot_ok = (cam.view.topLeftCorner<3, 3>() - cam.rotation).norm() <= 1e-9;
    if (!origin_ok || !rot_ok) out << "view_matrix inconsistent with (rotation, center); ";
  }
  std::string s = out.str();
  if (s.size() >= 2) s.resize(s.size() - 2);
  return s;
}

void validate_camera(const Camera& camera) {
  const std::string v = camera_violations(camera);
  if (!v.empty()) throw std::invalid_argument("invalid camera: " + v);
}

NdcPoint project(const Camera& camera, const Vec3& p, const ProjectionParams& params) {
  const Vec4 view = transform_point(camera.view, p.x(), p.y(), p.z(), 1.0);
  const Vec4 clip = transform_point(camera.proj, view.x(), view.y(), view.z(), view.w());
  NdcPoint out;
  const double denom = clip.w() + params.epsilon;
  out.x_ndc = clip.x() / denom;
  out.y_ndc = clip.y() / denom;
  out.z_ndc = clip.z() / denom;
  out.z_clip = clip.z();
  out.w_clip = clip.w();
  out.view_depth = view.z();
  out.valid = clip.w() > params.tau_near;
  return out;
}

PixelCoord ndc_to_pixel(const NdcPoint& ndc, int width, int height) {
  const double fx = std::floor((ndc.x_ndc + 1.0) / 2.0 * width);
  const double fy = std::floor((ndc.y_ndc + 1.0) / 2.0 * height);
  PixelCoord px;
  // Clamp before the integer conversion; anything outside [-1, dim] is out of bounds anyway.
  px.x = static_cast<std::int64_t>(std::fmin(std::fmax(fx, -1.0), static_cast<double>(width)));
  px.y = static_cast<std::int64_t>(std::fmin(std::fmax(fy, -1.0), static_cast<double>(height)));
  if (std::isnan(fx)) px.x = -1;
  if (std::isnan(fy)) px.y = -1;
  px.in_bounds = px.x >= 0 && px.x < width && px.y >= 0 && px.y < height;
  return px;
}

double linearize_depth(double z_hw, double near, double far) {
  const double denom = far - z_hw * (far - near);
  if (!(denom > 0.0)) {
    throw std::domain_error("linearize_depth: non-positive denominator (z_hw=" + std::to_string(z_hw) + ")");
  }
  return (near * far) / denom;
}

double hardware_depth(double view_depth, double near, double far) {
  return far * (view_depth - near) / (view_depth * (far - near));
}

Vec3 back_project(const Camera& camera, int u, int v, double depth_linear) {
  const Eigen::FullPivLU<Mat3> lu(camera.intrinsics);
  if (!lu.isInvertible()) throw std::domain_error("back_project: intrinsics matrix is singular");
  const Vec3 ray = lu.solve(Vec3(u, v, 1.0));
  return camera.center + camera.rotation.transpose() * (depth_linear * ray);
}

Mat4 view_projection(const Camera& camera) { return camera.proj * camera.view; }

}  // namespace proxygs
