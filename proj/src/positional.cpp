// SPDX-License-Identifier: Apache-2.0
#include "mbev/positional.hpp"

#include <algorithm>

namespace mbev {

std::vector<std::vector<Vec3>> frustum_points(const CameraSpec& cam, int hf,
                                              int wf, int patch,
                                              const std::vector<double>& depths) {
  MBEV_CHECK(depths.size() >= 2, Err::BadConfig, "need at least two depths");
  for (size_t i = 0; i < depths.size(); ++i) {
    MBEV_CHECK(depths[i] > 0, Err::BadConfig, "depths must be positive");
    if (i) MBEV_CHECK(depths[i] > depths[i - 1], Err::BadConfig,
                      "depths must be increasing");
  }
  const Mat3 rt = cam.rot.transposed();
  std::vector<std::vector<Vec3>> out(size_t(hf) * wf);
  for (int r = 0; r < hf; ++r)
    for (int c = 0; c < wf; ++c) {
      auto& cell = out[size_t(r) * wf + c];
      const double u = (c + 0.5) * patch;
      const double v = (r + 0.5) * patch;
      for (double d : depths) {
        const Vec3 pc{(u - cam.cx) / cam.fx * d, (v - cam.cy) / cam.fy * d, d};
        cell.push_back(rt * (pc - cam.trans));
      }
    }
  return out;
}

std::vector<double> frustum_coords_normalized(const CameraSpec& cam, int hf,
                                              int wf, int patch,
                                              const PEConfig& pe) {
  const auto pts = frustum_points(cam, hf, wf, patch, pe.depths());
  const double ext = pe.extent_m;
  MBEV_CHECK(ext > 0, Err::BadConfig, "pe extent must be positive");
  auto norm = [ext](double x) {
    return std::clamp((x + ext) / (2.0 * ext), 0.0, 1.0);
  };
  std::vector<double> out;
  out.reserve(pts.size() * pts[0].size() * 3);
  for (const auto& cell : pts)
    for (const auto& p : cell) {
      out.push_back(norm(p.x));
      out.push_back(norm(p.y));
      out.push_back(norm(p.z));
    }
  return out;
}

}  // namespace mbev
