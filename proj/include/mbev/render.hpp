// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "mbev/rig.hpp"
#include "mbev/scene.hpp"

namespace mbev {

inline constexpr int kViews = 6;
inline constexpr int kTimesteps = 2;  // slot 0 = previous frame, slot 1 = current

// Images for one scene: (V, T, H, W, 3) float32 in [0, 1].
struct MultiViewFrame {
  int height = 0, width = 0;
  std::vector<float> data;

  size_t slice_offset(int v, int t) const {
    return ((size_t(v) * kTimesteps + t) * height) * width * 3;
  }
  const float* image(int v, int t) const { return data.data() + slice_offset(v, t); }
  float* image(int v, int t) { return data.data() + slice_offset(v, t); }
  size_t image_size() const { return size_t(height) * width * 3; }
};

std::array<float, 3> class_color(int class_id);

// Flat-shaded rasterization of box faces over a ground-plane-gradient
// background, far-to-near painter order. t is a timestep slot (0 or 1);
// slot 0 re-derives object poses by constant-velocity rollback and
// ego-motion compensation. Deterministic.
std::vector<float> render_view(const Scene& scene, const CameraSpec& cam, int t);

MultiViewFrame render_frame(const Scene& scene, const Rig& rig);

}  // namespace mbev
