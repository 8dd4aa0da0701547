// SPDX-License-Identifier: Apache-2.0
#include "mbev/masking.hpp"

#include <cmath>

namespace mbev {

MaskSchedule MaskSchedule::make(const std::array<double, kViews>& probs,
                                MaskGranularity gran, double p_keep_all,
                                uint64_t k_seed) {
  double sum = 0;
  for (double p : probs) {
    MBEV_CHECK(p >= 0, Err::BadConfig, "negative mask probability");
    sum += p;
  }
  MBEV_CHECK(std::abs(sum - 1.0) < 1e-9, Err::BadConfig,
             "mask k-distribution must sum to 1");
  MBEV_CHECK(p_keep_all >= 0 && p_keep_all <= 1, Err::BadConfig, "p_keep_all");
  MaskSchedule s;
  s.k_probs = probs;
  s.granularity = gran;
  s.p_keep_all = p_keep_all;
  s.k_seed = k_seed;
  return s;
}

MaskSchedule MaskSchedule::uniform_1_to_5() {
  return make({0.0, 0.2, 0.2, 0.2, 0.2, 0.2}, MaskGranularity::PerEpoch);
}

int MaskSchedule::draw_k(Rng& rng, int epoch) const {
  double u;
  if (granularity == MaskGranularity::PerEpoch) {
    // k is a deterministic function of (schedule, epoch); the subset below
    // still resamples per draw from the caller's stream.
    Rng er(derive_seed(k_seed, uint64_t(epoch)));
    u = er.uniform();
  } else {
    u = rng.uniform();
  }
  double acc = 0;
  for (int k = 0; k < kViews; ++k) {
    acc += k_probs[k];
    if (u < acc) return k;
  }
  for (int k = kViews - 1; k >= 0; --k)
    if (k_probs[k] > 0) return k;
  return 0;
}

MaskPattern sample_mask(Rng& rng, const MaskSchedule& schedule, int epoch) {
  MaskPattern p;
  if (schedule.p_keep_all > 0 && rng.uniform() < schedule.p_keep_all) return p;
  const int k = schedule.draw_k(rng, epoch);
  // Floyd's algorithm for a uniform k-subset of {0..5}.
  for (int j = kViews - k; j < kViews; ++j) {
    const int t = rng.uniform_int(j + 1);
    if (!p.masked[t])
      p.masked[t] = true;
    else
      p.masked[j] = true;
  }
  return p;
}

std::vector<MaskPattern> enumerate_patterns(int k) {
  MBEV_CHECK(k >= 0 && k <= kViews - 1, Err::BadConfig,
             "pattern enumeration supports k in [0, 5]");
  std::vector<MaskPattern> out;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    MaskPattern p;
    for (int i : idx) p.masked[i] = true;
    out.push_back(p);
    if (k == 0) break;
    // next combination in lexicographic order
    int i = k - 1;
    while (i >= 0 && idx[i] == kViews - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

MaskSplit apply_mask(const MaskPattern& pattern) {
  return {pattern.rest_views(), pattern.masked_views()};
}

}  // namespace mbev
