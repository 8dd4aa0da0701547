// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mbev/config.hpp"
#include "mbev/masking.hpp"

namespace mbev {

// Closed-form multiply-accumulate counts for one inference pass. Only
// matmul/conv MACs are counted; normalization and softmax bookkeeping are
// negligible next to them and excluded on both sides of every comparison.
struct FlopBreakdown {
  double encoder = 0;
  double pe3d = 0;
  double detection = 0;
  double mvr = 0;  // zero for the empty pattern

  double total() const { return encoder + pe3d + detection + mvr; }
  double mvr_fraction() const { return total() > 0 ? mvr / total() : 0.0; }
};

FlopBreakdown flop_count(const ExperimentConfig& cfg, const MaskPattern& pattern);

// The reconstruction decoder term alone, for either variant at a given
// masked-view count.
double mvr_decode_flops(const MVRConfig& mvr, int channels, int hf, int wf,
                        int masked_views);

}  // namespace mbev
