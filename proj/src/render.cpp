// SPDX-License-Identifier: Apache-2.0
#include "mbev/render.hpp"

#include <algorithm>
#include <cmath>

namespace mbev {

std::array<float, 3> class_color(int class_id) {
  static const std::array<std::array<float, 3>, 8> palette = {{
      {0.85f, 0.15f, 0.10f},  // red
      {0.15f, 0.75f, 0.20f},  // green
      {0.15f, 0.30f, 0.90f},  // blue
      {0.90f, 0.85f, 0.10f},  // yellow
      {0.85f, 0.15f, 0.80f},  // magenta
      {0.10f, 0.80f, 0.85f},  // cyan
      {0.95f, 0.55f, 0.10f},  // orange
      {0.55f, 0.20f, 0.85f},  // purple
  }};
  return palette[class_id % int(palette.size())];
}

namespace {

constexpr double kNearPlane = 0.2;

struct CamPoly {
  std::vector<Vec3> pts;  // camera-frame vertices, z > near
  double mean_depth = 0;
  std::array<float, 3> color{};
};

// Face corner indices into the 2x2x2 local-corner ordering used below,
// plus a flat shade per face orientation.
struct FaceDef {
  std::array<int, 4> idx;
  float shade;
};

// Local corners enumerated as (sx, sy, sz) with sx major: index = 4*ix+2*iy+iz.
const FaceDef kFaces[6] = {
    {{1, 3, 7, 5}, 1.00f},  // top (+z)
    {{0, 2, 6, 4}, 0.50f},  // bottom
    {{4, 5, 7, 6}, 0.85f},  // +x
    {{0, 1, 3, 2}, 0.85f},  // -x
    {{2, 3, 7, 6}, 0.70f},  // +y
    {{0, 1, 5, 4}, 0.70f},  // -y
};

std::array<Vec3, 8> box_corners_local(double l, double w, double h) {
  std::array<Vec3, 8> out;
  int k = 0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1}) out[k++] = {sx * l / 2, sy * w / 2, sz * h / 2};
  return out;
}

// Clip a convex polygon against z >= kNearPlane (Sutherland-Hodgman).
std::vector<Vec3> clip_near(const std::vector<Vec3>& in) {
  std::vector<Vec3> out;
  const int n = int(in.size());
  for (int i = 0; i < n; ++i) {
    const Vec3& a = in[i];
    const Vec3& b = in[(i + 1) % n];
    const bool ain = a.z >= kNearPlane, bin = b.z >= kNearPlane;
    if (ain) out.push_back(a);
    if (ain != bin) {
      const double t = (kNearPlane - a.z) / (b.z - a.z);
      out.push_back(a + (b - a) * t);
    }
  }
  return out;
}

void fill_polygon(std::vector<float>& img, int H, int W,
                  const std::vector<double>& us, const std::vector<double>& vs,
                  const std::array<float, 3>& color) {
  const int n = int(us.size());
  if (n < 3) return;
  double vmin = vs[0], vmax = vs[0];
  for (double v : vs) {
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  const int y0 = std::max(0, int(std::floor(vmin - 0.5)));
  const int y1 = std::min(H - 1, int(std::ceil(vmax + 0.5)));
  for (int y = y0; y <= y1; ++y) {
    const double yc = y + 0.5;
    double xmin = 1e300, xmax = -1e300;
    bool hit = false;
    for (int i = 0; i < n; ++i) {
      const double va = vs[i], vb = vs[(i + 1) % n];
      const double ua = us[i], ub = us[(i + 1) % n];
      if ((va <= yc && vb > yc) || (vb <= yc && va > yc)) {
        const double t = (yc - va) / (vb - va);
        const double x = ua + (ub - ua) * t;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        hit = true;
      }
    }
    if (!hit) continue;
    const int x0 = std::max(0, int(std::ceil(xmin - 0.5)));
    const int x1 = std::min(W - 1, int(std::floor(xmax - 0.5)));
    for (int x = x0; x <= x1; ++x) {
      float* px = img.data() + (size_t(y) * W + x) * 3;
      px[0] = color[0];
      px[1] = color[1];
      px[2] = color[2];
    }
  }
}

void draw_background(std::vector<float>& img, const CameraSpec& cam) {
  const Mat3 rt = cam.rot.transposed();
  const Vec3 origin = cam.ego_position();
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const double dx = (x + 0.5 - cam.cx) / cam.fx;
      const double dy = (y + 0.5 - cam.cy) / cam.fy;
      Vec3 dir = rt * Vec3{dx, dy, 1.0};
      const double len = dir.norm();
      dir = dir * (1.0 / len);
      float* px = img.data() + (size_t(y) * cam.width + x) * 3;
      if (dir.z < -1e-9) {
        const double s = -origin.z / dir.z;  // distance to the ground plane
        const float g = float(0.25 + 0.75 / (1.0 + s / 12.0));
        px[0] = 0.50f * g;
        px[1] = 0.45f * g;
        px[2] = 0.40f * g;
      } else {
        px[0] = 0.10f;
        px[1] = 0.12f;
        px[2] = 0.16f;
      }
    }
}

}  // namespace

std::vector<float> render_view(const Scene& scene, const CameraSpec& cam, int t) {
  MBEV_CHECK(t == 0 || t == 1, Err::BadConfig, "timestep slot must be 0 or 1");
  std::vector<float> img(size_t(cam.height) * cam.width * 3, 0.f);
  draw_background(img, cam);

  std::vector<CamPoly> polys;
  for (const auto& obj : scene.objects) {
    Vec3 center = obj.center;
    double yaw = obj.yaw;
    if (t == 0) {
      const auto prev = object_at_prev(obj, scene.ego_motion);
      center = prev.center;
      yaw = prev.yaw;
    }
    const auto local = box_corners_local(obj.length, obj.width, obj.height);
    const Mat3 r = Mat3::rot_z(yaw);
    std::array<Vec3, 8> cam_pts;
    for (int i = 0; i < 8; ++i)
      cam_pts[i] = cam.rot * (center + r * local[i]) + cam.trans;
    const auto base = class_color(obj.class_id);
    for (const auto& face : kFaces) {
      std::vector<Vec3> poly = {cam_pts[face.idx[0]], cam_pts[face.idx[1]],
                                cam_pts[face.idx[2]], cam_pts[face.idx[3]]};
      poly = clip_near(poly);
      if (poly.size() < 3) continue;
      CamPoly cp;
      cp.pts = std::move(poly);
      for (const auto& p : cp.pts) cp.mean_depth += p.z;
      cp.mean_depth /= double(cp.pts.size());
      cp.color = {base[0] * face.shade, base[1] * face.shade, base[2] * face.shade};
      polys.push_back(std::move(cp));
    }
  }

  // Painter's algorithm: far faces first. Stable sort keeps draw order
  // deterministic for equal depths.
  std::stable_sort(polys.begin(), polys.end(),
                   [](const CamPoly& a, const CamPoly& b) {
                     return a.mean_depth > b.mean_depth;
                   });

  std::vector<double> us, vs;
  for (const auto& poly : polys) {
    us.clear();
    vs.clear();
    for (const auto& p : poly.pts) {
      us.push_back(cam.fx * p.x / p.z + cam.cx);
      vs.push_back(cam.fy * p.y / p.z + cam.cy);
    }
    fill_polygon(img, cam.height, cam.width, us, vs, poly.color);
  }
  return img;
}

MultiViewFrame render_frame(const Scene& scene, const Rig& rig) {
  MultiViewFrame frame;
  frame.height = rig.cameras[0].height;
  frame.width = rig.cameras[0].width;
  frame.data.resize(size_t(kViews) * kTimesteps * frame.image_size());
  for (int v = 0; v < kViews; ++v)
    for (int t = 0; t < kTimesteps; ++t) {
      const auto img = render_view(scene, rig.cameras[v], t);
      std::copy(img.begin(), img.end(), frame.image(v, t));
    }
  return frame;
}

}  // namespace mbev
