// SPDX-License-Identifier: Apache-2.0
#include "mbev/flops.hpp"

namespace mbev {

namespace {

double dwconv_taps(int hf, int wf) {
  // valid (cell, tap) pairs of a zero-padded 3x3 pass
  double sum = 0;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc)
      sum += double(hf - std::abs(dr)) * double(wf - std::abs(dc));
  return sum;
}

double decoder_sequence_flops(const MVRConfig& m, int channels, int seq_len) {
  const double L = seq_len, d = m.decoder_dim;
  double f = 0;
  if (channels != m.decoder_dim) f += 2.0 * L * channels * d;  // in + out proj
  const double hidden = double(m.mlp_ratio) * d;
  f += m.decoder_layers * (4.0 * L * d * d +   // qkv + out projections
                           2.0 * L * L * d +   // attention scores + context
                           2.0 * L * d * hidden);
  return f;
}

}  // namespace

double mvr_decode_flops(const MVRConfig& mvr, int channels, int hf, int wf,
                        int masked_views) {
  if (masked_views == 0) return 0.0;
  const int hw = hf * wf;
  if (mvr.variant == MvrVariant::Local)
    return masked_views * decoder_sequence_flops(mvr, channels, kTimesteps * hw);
  return decoder_sequence_flops(mvr, channels, kSlices * hw);
}

FlopBreakdown flop_count(const ExperimentConfig& cfg, const MaskPattern& pattern) {
  FlopBreakdown out;
  const int hf = cfg.hf(), wf = cfg.wf();
  const double T = double(hf) * wf;
  const double C = cfg.encoder.channels;

  const double embed = T * (cfg.encoder.patch * cfg.encoder.patch * 3) * C;
  const double per_block = dwconv_taps(hf, wf) * C + 4.0 * T * C * C;
  out.encoder = kSlices * (embed + cfg.encoder.depth * per_block);

  out.pe3d = kViews * T *
             (cfg.pe.depth_bins * 3.0 * 2.0 * C + 2.0 * C * C);

  const double N = kSlices * T;
  const double Q = cfg.det.num_queries;
  const double D = cfg.det.decoder_dim;
  const double hidden = double(cfg.det.mlp_ratio) * D;
  double det = Q * C * D;  // query projection
  det += cfg.det.decoder_layers *
         (4.0 * Q * D * D + 2.0 * Q * Q * D +       // query self-attention
          2.0 * Q * D * D + 2.0 * N * C * D +       // cross q/o + k/v
          2.0 * Q * N * D +                         // cross scores + context
          2.0 * Q * D * hidden);
  det += Q * D * (cfg.det.num_classes + 1) + Q * D * kBoxDims;
  out.detection = det;

  out.mvr = mvr_decode_flops(cfg.mvr, cfg.encoder.channels, hf, wf, pattern.count());
  return out;
}

}  // namespace mbev
