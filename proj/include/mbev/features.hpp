// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "mbev/nn/graph.hpp"
#include "mbev/render.hpp"

namespace mbev {

inline constexpr int kSlices = kViews * kTimesteps;
inline int slice_index(int v, int t) { return v * kTimesteps + t; }

// Encoder output for one scene: a [Hf*Wf, C] token matrix per (view,
// timestep) slice, row-major over the feature grid.
template <class S>
struct FeatureGridT {
  int hf = 0, wf = 0, channels = 0;
  std::array<std::vector<S>, kSlices> slices;

  size_t tokens() const { return size_t(hf) * wf; }
  void allocate() {
    for (auto& s : slices) s.assign(tokens() * channels, S(0));
  }
};
using FeatureGrid = FeatureGridT<float>;

// Same grid, but as live graph nodes (so downstream consumers keep the
// gradient path when slices are replaced by reconstructions).
template <class S>
struct FeatureGridVal {
  int hf = 0, wf = 0, channels = 0;
  std::array<typename nn::Graph<S>::Val, kSlices> slice{};

  int tokens() const { return hf * wf; }
};

template <class S>
FeatureGridT<S> grid_values(const nn::Graph<S>& g, const FeatureGridVal<S>& fg) {
  FeatureGridT<S> out;
  out.hf = fg.hf;
  out.wf = fg.wf;
  out.channels = fg.channels;
  for (int i = 0; i < kSlices; ++i) out.slices[i] = g.val(fg.slice[i]);
  return out;
}

template <class S>
FeatureGridVal<S> grid_inputs(nn::Graph<S>& g, const FeatureGridT<S>& fg) {
  FeatureGridVal<S> out;
  out.hf = fg.hf;
  out.wf = fg.wf;
  out.channels = fg.channels;
  for (int i = 0; i < kSlices; ++i)
    out.slice[i] = g.input(int(fg.tokens()), fg.channels, fg.slices[i]);
  return out;
}

}  // namespace mbev
