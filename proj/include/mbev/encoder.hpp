// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mbev/features.hpp"
#include "mbev/nn/blocks.hpp"

namespace mbev {

struct EncoderConfig {
  int patch = 8;
  int channels = 64;
  int depth = 4;
  bool frozen = false;

  void validate(int img_h, int img_w) const {
    MBEV_CHECK(patch > 0 && channels > 0 && depth >= 1, Err::BadConfig,
               "encoder config");
    MBEV_CHECK(img_h % patch == 0 && img_w % patch == 0, Err::ShapeMismatch,
               "patch size must divide the image dimensions");
  }
};

inline EncoderConfig set_frozen(EncoderConfig cfg, bool flag) {
  cfg.frozen = flag;
  return cfg;
}

// Patch embedding followed by `depth` mixing blocks, each a 3x3 depthwise
// spatial pass plus a per-token MLP (both pre-norm, residual), and a final
// norm so feature scale stays stable for the reconstruction loss. All twelve
// (view, timestep) slices share weights.
template <class S>
class EncoderT {
 public:
  using Val = typename nn::Graph<S>::Val;

  EncoderT() = default;
  EncoderT(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int c = cfg.channels;
    const int in_dim = cfg.patch * cfg.patch * 3;
    embed_ = nn::LinearP<S>("enc.embed", in_dim, c);
    embed_.init(rng, 0.08);
    for (int i = 0; i < cfg.depth; ++i) {
      const std::string base = "enc.block" + std::to_string(i);
      Block b;
      b.ln1 = nn::LayerNormP<S>(base + ".ln1", c);
      b.dw_w = nn::ParamTensor<S>(base + ".dw.w", 9, c);
      b.dw_b = nn::ParamTensor<S>(base + ".dw.b", 1, c);
      b.dw_w.init_normal(rng, 0.1);
      b.ln2 = nn::LayerNormP<S>(base + ".ln2", c);
      b.mlp = nn::MlpP<S>(base + ".mlp", c, 2 * c);
      b.mlp.init(rng, 0.05);
      blocks_.push_back(std::move(b));
    }
    out_ln_ = nn::LayerNormP<S>("enc.out_ln", c);
  }

  const EncoderConfig& config() const { return cfg_; }
  EncoderConfig& config() { return cfg_; }

  // Tokens for one (view, timestep) image slice: [Hf*Wf, C].
  Val encode_slice(nn::Graph<S>& g, const float* img, int h, int w) {
    const int p = cfg_.patch;
    const int hf = h / p, wf = w / p;
    std::vector<S> patches(size_t(hf) * wf * p * p * 3);
    for (int r = 0; r < hf; ++r)
      for (int c = 0; c < wf; ++c) {
        S* dst = patches.data() + (size_t(r) * wf + c) * (p * p * 3);
        for (int py = 0; py < p; ++py)
          for (int px = 0; px < p; ++px) {
            const float* src = img + (size_t(r * p + py) * w + (c * p + px)) * 3;
            *dst++ = S(src[0]);
            *dst++ = S(src[1]);
            *dst++ = S(src[2]);
          }
      }
    const bool fr = cfg_.frozen;
    Val x = g.input(hf * wf, p * p * 3, patches);
    x = embed_.fwd(g, x, fr);
    for (auto& b : blocks_) {
      auto h1 = b.ln1.fwd(g, x, fr);
      x = g.add(x, g.dwconv3x3(h1, hf, wf, g.param(b.dw_w, fr), g.param(b.dw_b, fr)));
      x = g.add(x, b.mlp.fwd(g, b.ln2.fwd(g, x, fr), fr));
    }
    return out_ln_.fwd(g, x, fr);
  }

  FeatureGridVal<S> encode(nn::Graph<S>& g, const MultiViewFrame& frame) {
    cfg_.validate(frame.height, frame.width);
    FeatureGridVal<S> out;
    out.hf = frame.height / cfg_.patch;
    out.wf = frame.width / cfg_.patch;
    out.channels = cfg_.channels;
    for (int v = 0; v < kViews; ++v)
      for (int t = 0; t < kTimesteps; ++t)
        out.slice[slice_index(v, t)] =
            encode_slice(g, frame.image(v, t), frame.height, frame.width);
    return out;
  }

  void collect(std::vector<nn::ParamTensor<S>*>& out) {
    embed_.collect(out);
    for (auto& b : blocks_) {
      b.ln1.collect(out);
      out.push_back(&b.dw_w);
      out.push_back(&b.dw_b);
      b.ln2.collect(out);
      b.mlp.collect(out);
    }
    out_ln_.collect(out);
  }

 private:
  struct Block {
    nn::LayerNormP<S> ln1, ln2;
    nn::ParamTensor<S> dw_w, dw_b;
    nn::MlpP<S> mlp;
  };

  EncoderConfig cfg_;
  nn::LinearP<S> embed_;
  std::vector<Block> blocks_;
  nn::LayerNormP<S> out_ln_;
};

}  // namespace mbev
