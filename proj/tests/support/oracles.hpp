// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations the test suites check the
// implementation against. Everything here is deliberately brute force and
// shares no code with the implementation paths it verifies.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "mbev/masking.hpp"
#include "mbev/mvr.hpp"
#include "mbev/nn/graph.hpp"
#include "mbev/rig.hpp"

namespace oracles {

// Central finite differences against the analytic gradient of a scalar
// built by `build` from the current parameter values. Returns the largest
// relative error over all checked entries.
template <class S>
double grad_check(std::vector<mbev::nn::ParamTensor<S>*> params,
                  const std::function<typename mbev::nn::Graph<S>::Val(
                      mbev::nn::Graph<S>&)>& build,
                  double h = 1e-5) {
  using Graph = mbev::nn::Graph<S>;
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    auto loss = build(g);
    g.backward(loss);
  }
  double worst = 0;
  for (auto* p : params) {
    for (size_t i = 0; i < p->size(); ++i) {
      const S saved = p->v[i];
      const double step = h * std::max(1.0, std::abs(double(saved)));
      p->v[i] = S(double(saved) + step);
      double up, down;
      {
        Graph g(false);
        up = double(g.scalar(build(g)));
      }
      p->v[i] = S(double(saved) - step);
      {
        Graph g(false);
        down = double(g.scalar(build(g)));
      }
      p->v[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = double(p->g[i]);
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

// Per-cell construction of the locally assembled plane: walks every
// (row, col) and applies the side/middle rule directly on raw values.
template <class S>
std::vector<S> local_assembly_reference(
    const std::array<std::vector<S>, mbev::kSlices>& slices, int hf, int wf,
    int channels, const mbev::MaskPattern& pattern, int view, int left_view,
    int right_view, const std::vector<S>& token, int left_w, int mid_w,
    int right_w) {
  (void)mid_w;
  std::vector<S> plane(size_t(hf) * wf * channels);
  for (int r = 0; r < hf; ++r)
    for (int c = 0; c < wf; ++c) {
      S* dst = plane.data() + (size_t(r) * wf + c) * channels;
      for (int ch = 0; ch < channels; ++ch) {
        S value;
        if (c < left_w && !pattern.masked[left_view]) {
          const int src_col = wf - left_w + c;
          const size_t off = (size_t(r) * wf + src_col) * channels + ch;
          const S a = slices[mbev::slice_index(left_view, 0)][off];
          const S b = slices[mbev::slice_index(left_view, 1)][off];
          value = S(0.5) * a + S(0.5) * b;
        } else if (c >= wf - right_w && !pattern.masked[right_view]) {
          const int src_col = c - (wf - right_w);
          const size_t off = (size_t(r) * wf + src_col) * channels + ch;
          const S a = slices[mbev::slice_index(right_view, 0)][off];
          const S b = slices[mbev::slice_index(right_view, 1)][off];
          value = S(0.5) * a + S(0.5) * b;
        } else {
          value = token[ch];
        }
        dst[ch] = value;
      }
      (void)view;
    }
  return plane;
}

// Exhaustive min-cost injective assignment of all gts to queries.
inline double brute_force_assignment(const std::vector<double>& cost,
                                     int num_queries, int num_gts) {
  std::vector<int> qs(num_queries);
  std::iota(qs.begin(), qs.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  // choose an ordered selection of num_gts queries
  std::vector<int> pick(num_gts, -1);
  std::vector<char> used(num_queries, 0);
  std::function<void(int, double)> rec = [&](int t, double acc) {
    if (acc >= best) return;
    if (t == num_gts) {
      best = acc;
      return;
    }
    for (int q = 0; q < num_queries; ++q) {
      if (used[q]) continue;
      used[q] = 1;
      rec(t + 1, acc + cost[size_t(q) * num_gts + t]);
      used[q] = 0;
    }
  };
  if (num_gts == 0) return 0.0;
  rec(0, 0.0);
  return best;
}

// Fraction of view i's horizontal field sampled by a dense ray fan that
// also projects into view j. Rays run at the cameras' height so they stay
// in both vertical fields.
inline double overlap_by_ray_fan(const mbev::Rig& rig, int i, int j,
                                 int n_rays = 20000) {
  const auto& ci = rig.cameras[i];
  const double h = mbev::deg2rad(rig.hfov_deg);
  int inside = 0;
  for (int k = 0; k < n_rays; ++k) {
    const double az = ci.yaw - h / 2 + h * (k + 0.5) / n_rays;
    const mbev::Vec3 p{std::cos(az) * 500.0, std::sin(az) * 500.0,
                       ci.ego_position().z};
    if (mbev::project_point(rig.cameras[j], p)) ++inside;
  }
  return double(inside) / n_rays;
}

// Direct focal-term evaluation for a single probability.
inline double focal_term(double p, double alpha, double gamma) {
  return alpha * std::pow(1.0 - p, gamma) * (-std::log(p));
}

}  // namespace oracles
