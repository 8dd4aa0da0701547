// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "mbev/nn/blocks.hpp"
#include "mbev/render.hpp"
#include "mbev/rig.hpp"

namespace mbev {

// Fixed 2D sine-cosine grid embedding, [Hf*Wf, C] row-major. The first half
// of the channels encodes the row index, the second half the column index;
// within each half, channels alternate (sin, cos) per frequency, frequency
// pair k using omega_k = 10000^(-k / (C/4)) so pair 0 runs at omega = 1.
template <class S>
std::vector<S> sincos_2d(int hf, int wf, int c) {
  MBEV_CHECK(c % 4 == 0, Err::BadConfig, "sincos embedding needs C % 4 == 0");
  const int q = c / 4;
  std::vector<S> out(size_t(hf) * wf * c);
  for (int r = 0; r < hf; ++r)
    for (int col = 0; col < wf; ++col) {
      S* dst = out.data() + (size_t(r) * wf + col) * c;
      for (int k = 0; k < q; ++k) {
        const double omega = std::pow(10000.0, -double(k) / double(q));
        dst[2 * k] = S(std::sin(r * omega));
        dst[2 * k + 1] = S(std::cos(r * omega));
        dst[c / 2 + 2 * k] = S(std::sin(col * omega));
        dst[c / 2 + 2 * k + 1] = S(std::cos(col * omega));
      }
    }
  return out;
}

struct PEConfig {
  int depth_bins = 8;
  double depth_min_m = 1.0;
  double depth_max_m = 40.0;
  double extent_m = 60.0;  // normalization extent for back-projected coords

  std::vector<double> depths() const {
    MBEV_CHECK(depth_bins >= 2, Err::BadConfig, "need at least two depth bins");
    MBEV_CHECK(depth_min_m > 0 && depth_max_m > depth_min_m, Err::BadConfig,
               "depth range must be positive and increasing");
    std::vector<double> out(depth_bins);
    for (int i = 0; i < depth_bins; ++i)
      out[i] = depth_min_m +
               (depth_max_m - depth_min_m) * double(i) / double(depth_bins - 1);
    return out;
  }
};

// Ego-frame points obtained by back-projecting each feature-grid cell center
// through the camera at the sampled depths. Returns [Hf*Wf][D] points.
std::vector<std::vector<Vec3>> frustum_points(const CameraSpec& cam, int hf,
                                              int wf, int patch,
                                              const std::vector<double>& depths);

// Frustum coordinates flattened and normalized into [0,1] by the configured
// extent (clamped), ready for the embedding MLP: [Hf*Wf, D*3].
std::vector<double> frustum_coords_normalized(const CameraSpec& cam, int hf,
                                              int wf, int patch,
                                              const PEConfig& pe);

// Learned camera-frustum embedding: normalized back-projected coordinates
// mapped through a 2-layer MLP to C channels. Coordinates are fixed by the
// rig; only the MLP is trainable.
template <class S>
class PE3DT {
 public:
  using Val = typename nn::Graph<S>::Val;

  PE3DT() = default;
  PE3DT(const Rig& rig, int hf, int wf, int patch, int channels,
        const PEConfig& pe, Rng& rng)
      : hf_(hf), wf_(wf), channels_(channels),
        fc1_("pe3d.fc1", pe.depth_bins * 3, 2 * channels),
        fc2_("pe3d.fc2", 2 * channels, channels) {
    fc1_.init(rng, 0.3);
    fc2_.init(rng, 0.1);
    for (const auto& cam : rig.cameras) {
      const auto coords = frustum_coords_normalized(cam, hf, wf, patch, pe);
      coords_.emplace_back(coords.begin(), coords.end());
    }
  }

  Val fwd(nn::Graph<S>& g, int view, bool frozen = false) {
    const int n = hf_ * wf_;
    Val x = g.input(n, int(coords_[view].size() / n), coords_[view]);
    return fc2_.fwd(g, g.gelu(fc1_.fwd(g, x, frozen)), frozen);
  }

  void collect(std::vector<nn::ParamTensor<S>*>& out) {
    fc1_.collect(out);
    fc2_.collect(out);
  }

  int channels() const { return channels_; }

 private:
  int hf_ = 0, wf_ = 0, channels_ = 0;
  nn::LinearP<S> fc1_, fc2_;
  std::vector<std::vector<S>> coords_;  // per view, [Hf*Wf, D*3]
};

// Two learned per-timestep vectors distinguishing the t-1 / t token planes.
template <class S>
struct TimePET {
  nn::ParamTensor<S> table;  // [2, C]

  TimePET() = default;
  TimePET(int channels, Rng& rng) : table("time_pe", kTimesteps, channels) {
    table.init_normal(rng, 0.02);
  }
  typename nn::Graph<S>::Val row(nn::Graph<S>& g, int t, bool frozen = false) {
    return g.slice_rows(g.param(table, frozen), t, 1);
  }
  void collect(std::vector<nn::ParamTensor<S>*>& out) { out.push_back(&table); }
};

// tokens + pe (+ broadcast time row). Shape mismatches throw.
template <class S>
typename nn::Graph<S>::Val add_pe(nn::Graph<S>& g, typename nn::Graph<S>::Val tokens,
                                  typename nn::Graph<S>::Val pe,
                                  std::optional<typename nn::Graph<S>::Val> time_row = {}) {
  auto out = g.add(tokens, pe);
  if (time_row) out = g.add_rowvec(out, *time_row);
  return out;
}

}  // namespace mbev
