// SPDX-License-Identifier: Apache-2.0
#include "mbev/rig.hpp"

#include <cmath>

namespace mbev {

void CameraSpec::validate() const {
  MBEV_CHECK(fx > 0 && fy > 0, Err::BadConfig, "camera focal lengths must be positive");
  MBEV_CHECK(cx >= 0 && cx < width, Err::BadConfig, "principal point cx out of image");
  MBEV_CHECK(cy >= 0 && cy < height, Err::BadConfig, "principal point cy out of image");
  const Mat3 rtr = rot.transposed() * rot;
  double dev = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      dev = std::max(dev, std::abs(rtr.m[i * 3 + j] - (i == j ? 1.0 : 0.0)));
  MBEV_CHECK(dev < 1e-9, Err::BadConfig, "camera rotation is not orthonormal");
  MBEV_CHECK(std::abs(rot.det() - 1.0) < 1e-9, Err::BadConfig,
             "camera rotation determinant != +1");
}

std::optional<Projection> project_point(const CameraSpec& cam, const Vec3& p_ego) {
  const Vec3 pc = cam.rot * p_ego + cam.trans;
  if (pc.z <= 0) return std::nullopt;
  const double u = cam.fx * pc.x / pc.z + cam.cx;
  const double v = cam.fy * pc.y / pc.z + cam.cy;
  if (u < 0 || u >= cam.width || v < 0 || v >= cam.height) return std::nullopt;
  return Projection{u, v, pc.z};
}

std::string Rig::view_name(int i) {
  static const char* names[6] = {"front",     "front_left", "back_left",
                                 "back",      "back_right", "front_right"};
  return (i >= 0 && i < 6) ? names[i] : ("view_" + std::to_string(i));
}

Rig make_rig(int n_views, double hfov_deg, double yaw_spacing_deg,
             double cam_height_m, int image_h, int image_w) {
  MBEV_CHECK(n_views == 6, Err::BadConfig, "rig requires exactly 6 views");
  MBEV_CHECK(hfov_deg > yaw_spacing_deg, Err::NoOverlap,
             "hfov must exceed yaw spacing so adjacent views overlap");
  MBEV_CHECK(image_h > 0 && image_w > 0, Err::BadConfig, "image size");

  Rig rig;
  rig.yaw_spacing_deg = yaw_spacing_deg;
  rig.hfov_deg = hfov_deg;
  const double fx = (image_w / 2.0) / std::tan(deg2rad(hfov_deg) / 2.0);
  for (int i = 0; i < n_views; ++i) {
    CameraSpec cam;
    cam.width = image_w;
    cam.height = image_h;
    cam.fx = fx;
    cam.fy = fx;
    cam.cx = image_w / 2.0;
    cam.cy = image_h / 2.0;
    cam.yaw = deg2rad(i * yaw_spacing_deg);
    const double c = std::cos(cam.yaw), s = std::sin(cam.yaw);
    // Camera axes in ego coords: x_cam = image right, y_cam = image down,
    // z_cam = optical axis. Rows of `rot` are those axes.
    cam.rot.m = {s, -c, 0, 0, 0, -1, c, s, 0};
    const Vec3 pos{0, 0, cam_height_m};
    const Vec3 rp = cam.rot * pos;
    cam.trans = {-rp.x, -rp.y, -rp.z};
    cam.validate();
    rig.cameras.push_back(cam);
  }
  return rig;
}

double overlap_fraction(const Rig& rig, int i, int j) {
  const int n = int(rig.cameras.size());
  MBEV_CHECK(i >= 0 && i < n && j >= 0 && j < n, Err::BadConfig, "view index");
  MBEV_CHECK(i != j, Err::SameView, "overlap_fraction needs two distinct views");
  const double sep =
      std::abs(wrap_angle(rig.cameras[i].yaw - rig.cameras[j].yaw));
  const double h = deg2rad(rig.hfov_deg);
  const double overlap = std::max(0.0, h - sep);
  return overlap / h;
}

}  // namespace mbev
