// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "mbev/common.hpp"
#include "mbev/render.hpp"

namespace mbev {

// Per-view failure indicator. A masked view is lost at both timesteps.
struct MaskPattern {
  std::array<bool, kViews> masked{};

  int count() const {
    int n = 0;
    for (bool b : masked) n += b;
    return n;
  }
  bool empty() const { return count() == 0; }
  std::vector<int> masked_views() const {
    std::vector<int> out;
    for (int v = 0; v < kViews; ++v)
      if (masked[v]) out.push_back(v);
    return out;
  }
  std::vector<int> rest_views() const {
    std::vector<int> out;
    for (int v = 0; v < kViews; ++v)
      if (!masked[v]) out.push_back(v);
    return out;
  }
  bool operator==(const MaskPattern& o) const { return masked == o.masked; }
};

enum class MaskGranularity { PerEpoch, PerIteration };

// How many views fail and how often. k = 6 is rejected at construction:
// with no surviving view there is no reconstruction context.
struct MaskSchedule {
  std::array<double, kViews> k_probs{};  // P(k) for k = 0..5
  MaskGranularity granularity = MaskGranularity::PerEpoch;
  // Per-draw chance of an empty pattern regardless of the epoch's k; used in
  // fine-tuning so the no-failure path stays trained.
  double p_keep_all = 0.0;
  uint64_t k_seed = 7;  // stream for the per-epoch k draw

  static MaskSchedule make(const std::array<double, kViews>& probs,
                           MaskGranularity gran, double p_keep_all = 0.0,
                           uint64_t k_seed = 7);
  static MaskSchedule uniform_1_to_5();

  int draw_k(Rng& rng, int epoch) const;
};

// Draws k per the schedule (fixed within an epoch for per-epoch granularity)
// and then a uniform k-subset of the views from `rng`.
MaskPattern sample_mask(Rng& rng, const MaskSchedule& schedule, int epoch);

// All C(6, k) patterns in lexicographic order of the masked index sets.
std::vector<MaskPattern> enumerate_patterns(int k);

// View-slice partition induced by a pattern. No feature data moves here;
// downstream assembly decides what fills the masked slots.
struct MaskSplit {
  std::vector<int> rest_views;
  std::vector<int> masked_views;
};
MaskSplit apply_mask(const MaskPattern& pattern);

}  // namespace mbev
