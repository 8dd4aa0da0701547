// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mbev/common.hpp"
#include "mbev/geometry.hpp"

namespace mbev {

// Pinhole camera. `rot`/`trans` map ego coordinates into the camera frame
// (x right, y down, z forward): p_cam = rot * p_ego + trans.
struct CameraSpec {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat3 rot;
  Vec3 trans;
  double yaw = 0;  // optical-axis azimuth in the ego frame

  void validate() const;
  Vec3 ego_position() const {
    const Vec3 t = rot.transposed() * trans;
    return {-t.x, -t.y, -t.z};
  }
};

struct Projection {
  double u = 0, v = 0, depth = 0;
};

// Pixel coordinates and camera-frame depth when the point lands in front of
// the camera and inside [0,width) x [0,height); empty otherwise.
std::optional<Projection> project_point(const CameraSpec& cam, const Vec3& p_ego);

struct Rig {
  std::vector<CameraSpec> cameras;  // ordered by increasing yaw
  double yaw_spacing_deg = 0;
  double hfov_deg = 0;

  int left_of(int i) const { return (i + 1) % int(cameras.size()); }
  int right_of(int i) const {
    return (i + int(cameras.size()) - 1) % int(cameras.size());
  }
  static std::string view_name(int i);
};

// Six cameras at a common height, yaw i * spacing, sharing one intrinsic
// model derived from hfov. Requires hfov > spacing so adjacent views overlap.
Rig make_rig(int n_views, double hfov_deg, double yaw_spacing_deg,
             double cam_height_m, int image_h, int image_w);

// Fraction of view i's horizontal field of view that also lies inside view
// j's field of view.
double overlap_fraction(const Rig& rig, int i, int j);

}  // namespace mbev
