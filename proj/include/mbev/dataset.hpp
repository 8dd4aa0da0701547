// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mbev/render.hpp"
#include "mbev/scene.hpp"

namespace mbev {

struct Dataset {
  int height = 0, width = 0;
  std::vector<Scene> scenes;
  std::vector<MultiViewFrame> frames;  // parallel to scenes

  size_t size() const { return scenes.size(); }
};

// Binary container: magic "MBEV-DS1", little-endian u32 header fields
// (version, n_scenes, V, T, H, W), raw f32 image tensors per scene, then a
// length-prefixed UTF-8 JSON manifest of the scene records.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace mbev
