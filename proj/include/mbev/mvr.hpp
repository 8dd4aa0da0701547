// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mbev/features.hpp"
#include "mbev/masking.hpp"
#include "mbev/nn/blocks.hpp"
#include "mbev/positional.hpp"

namespace mbev {

enum class MvrVariant { Global, Local };

struct MVRConfig {
  MvrVariant variant = MvrVariant::Local;
  double mask_ratio = 0.76;  // middle fraction of a masked view's columns
  int decoder_layers = 1;
  int decoder_dim = 16;
  int heads = 4;
  int mlp_ratio = 4;
  bool pe_enabled = true;

  // Reference decoder scale from the full-size setup this artifact shrinks.
  static MVRConfig reference_scale() {
    MVRConfig c;
    c.decoder_layers = 4;
    c.decoder_dim = 512;
    c.heads = 8;
    return c;
  }

  void validate() const {
    MBEV_CHECK(mask_ratio > 0 && mask_ratio < 1, Err::BadConfig,
               "mask_ratio must be in (0, 1)");
    MBEV_CHECK(decoder_layers >= 1 && decoder_dim >= 1, Err::BadConfig,
               "decoder shape");
    MBEV_CHECK(decoder_dim % heads == 0, Err::BadConfig,
               "decoder_dim must be divisible by heads");
  }
};

struct ColumnSplit {
  int left = 0, mid = 0, right = 0;
};

// Split Wf columns into side parts of round((1-ratio)/2 * Wf) columns each
// (at least 1) and a middle of the remainder (at least 1).
ColumnSplit partition_columns(int wf, double ratio);

struct TokenProvenance {
  int view = 0, t = 0, row = 0, col = 0;
};

template <class S>
struct AssembledSequence {
  typename nn::Graph<S>::Val tokens{};  // [N, C], positional content added
  std::vector<TokenProvenance> provenance;
  std::vector<int> masked_idx;  // positions whose reconstruction is gathered
  std::vector<int> target_views;
  int hf = 0, wf = 0, channels = 0;
};

template <class S>
struct ReconstructedFeatures {
  // One entry per reconstructed view: slices for both timestep slots.
  struct Entry {
    int view = 0;
    std::array<typename nn::Graph<S>::Val, kTimesteps> slice{};
  };
  std::vector<Entry> entries;
};

// Mask token + feature decoder + the two assembly strategies.
template <class S>
class MvrModuleT {
 public:
  using Val = typename nn::Graph<S>::Val;
  using Graph = nn::Graph<S>;

  MvrModuleT() = default;
  MvrModuleT(const MVRConfig& cfg, int channels, Rng& rng)
      : cfg_(cfg), channels_(channels), mask_token_("mvr.mask_token", 1, channels) {
    cfg_.validate();
    mask_token_.init_normal(rng, 0.02);
    const int d = cfg_.decoder_dim;
    if (channels != d) {
      in_proj_ = nn::LinearP<S>("mvr.in_proj", channels, d);
      in_proj_->init(rng);
      out_proj_ = nn::LinearP<S>("mvr.out_proj", d, channels);
      out_proj_->init(rng);
    }
    for (int i = 0; i < cfg_.decoder_layers; ++i) {
      blocks_.emplace_back("mvr.block" + std::to_string(i), d, cfg_.heads,
                           cfg_.mlp_ratio * d);
      blocks_.back().init(rng);
    }
    out_ln_ = nn::LayerNormP<S>("mvr.out_ln", d);
  }

  const MVRConfig& config() const { return cfg_; }
  MVRConfig& config() { return cfg_; }
  nn::ParamTensor<S>& mask_token() { return mask_token_; }

  Val mask_token_node(Graph& g) { return g.param(mask_token_); }

  // Local assembly: one masked view, both timestep slots share an assembled
  // plane whose side columns come from the temporal mean of the neighbor
  // overlaps; a masked neighbor contributes mask tokens instead.
  AssembledSequence<S> assemble_local(Graph& g, const FeatureGridVal<S>& f,
                                      const MaskPattern& pattern, int view,
                                      const Rig& rig, TimePET<S>* time_pe) {
    MBEV_CHECK(view >= 0 && view < kViews && pattern.masked[view], Err::BadConfig,
               "assemble_local requires a masked view");
    const int hf = f.hf, wf = f.wf, c = f.channels;
    const auto split = partition_columns(wf, cfg_.mask_ratio);
    const Val token = mask_token_node(g);

    const int left_view = rig.left_of(view);
    const int right_view = rig.right_of(view);
    std::optional<Val> left_src, right_src;
    if (!pattern.masked[left_view])
      left_src = g.lincomb(f.slice[slice_index(left_view, 0)],
                           f.slice[slice_index(left_view, 1)], S(0.5), S(0.5));
    if (!pattern.masked[right_view])
      right_src = g.lincomb(f.slice[slice_index(right_view, 0)],
                            f.slice[slice_index(right_view, 1)], S(0.5), S(0.5));

    std::vector<Val> strips;
    for (int r = 0; r < hf; ++r) {
      if (left_src)
        strips.push_back(g.slice_rows(*left_src, r * wf + (wf - split.left), split.left));
      else
        strips.push_back(g.tile_rows(token, split.left));
      strips.push_back(g.tile_rows(token, split.mid));
      if (right_src)
        strips.push_back(g.slice_rows(*right_src, r * wf, split.right));
      else
        strips.push_back(g.tile_rows(token, split.right));
    }
    const Val plane = g.concat_rows(strips);

    AssembledSequence<S> seq;
    seq.hf = hf;
    seq.wf = wf;
    seq.channels = c;
    seq.target_views = {view};
    std::vector<Val> slots;
    std::optional<Val> pe2d;
    if (cfg_.pe_enabled) {
      if (pe2d_vals_.size() != size_t(hf) * wf * c)
        pe2d_vals_ = sincos_2d<S>(hf, wf, c);
      pe2d = g.input(hf * wf, c, pe2d_vals_);
    }
    for (int t = 0; t < kTimesteps; ++t) {
      Val x = plane;
      if (pe2d) {
        x = g.add(x, *pe2d);
        if (time_pe) x = g.add_rowvec(x, time_pe->row(g, t));
      }
      slots.push_back(x);
      for (int r = 0; r < hf; ++r)
        for (int col = 0; col < wf; ++col)
          seq.provenance.push_back({view, t, r, col});
    }
    seq.tokens = g.concat_rows(slots);
    seq.masked_idx.resize(size_t(2) * hf * wf);
    for (size_t i = 0; i < seq.masked_idx.size(); ++i) seq.masked_idx[i] = int(i);
    return seq;
  }

  // Global assembly: every (view, timestep) slice in one sequence; masked
  // slots are mask-token fills. Frustum + time embeddings localize views.
  // `pe3d_nodes` may carry per-view embedding nodes already built on this
  // graph (evaluation caches them); otherwise they come from the module.
  AssembledSequence<S> assemble_global(Graph& g, const FeatureGridVal<S>& f,
                                       const MaskPattern& pattern,
                                       PE3DT<S>* pe3d, TimePET<S>* time_pe,
                                       const std::array<Val, kViews>* pe3d_nodes = nullptr) {
    const int masked = pattern.count();
    MBEV_CHECK(masked < kViews, Err::NoContext,
               "global assembly needs at least one surviving view");
    MBEV_CHECK(masked > 0, Err::NothingToReconstruct,
               "global assembly with nothing masked; bypass the decoder");
    const int hf = f.hf, wf = f.wf, c = f.channels;
    const int hw = hf * wf;
    const Val token = mask_token_node(g);

    AssembledSequence<S> seq;
    seq.hf = hf;
    seq.wf = wf;
    seq.channels = c;
    seq.target_views = pattern.masked_views();
    std::vector<Val> slots;
    for (int v = 0; v < kViews; ++v) {
      std::optional<Val> pe;
      if (cfg_.pe_enabled) {
        if (pe3d_nodes)
          pe = (*pe3d_nodes)[v];
        else if (pe3d)
          pe = pe3d->fwd(g, v);
      }
      for (int t = 0; t < kTimesteps; ++t) {
        Val x = pattern.masked[v] ? g.tile_rows(token, hw)
                                  : f.slice[slice_index(v, t)];
        if (pe) x = g.add(x, *pe);
        if (cfg_.pe_enabled && time_pe) x = g.add_rowvec(x, time_pe->row(g, t));
        if (pattern.masked[v]) {
          const int base = int(slots.size()) * hw;
          for (int i = 0; i < hw; ++i) seq.masked_idx.push_back(base + i);
        }
        for (int r = 0; r < hf; ++r)
          for (int col = 0; col < wf; ++col) seq.provenance.push_back({v, t, r, col});
        slots.push_back(x);
      }
    }
    seq.tokens = g.concat_rows(slots);
    return seq;
  }

  // Transformer feature decoder; output gathered at the masked positions and
  // reshaped into per-view timestep slices.
  ReconstructedFeatures<S> decode(Graph& g, const AssembledSequence<S>& seq) {
    Val x = seq.tokens;
    if (in_proj_) x = in_proj_->fwd(g, x);
    for (auto& b : blocks_) x = b.fwd(g, x);
    x = out_ln_.fwd(g, x);
    if (out_proj_) x = out_proj_->fwd(g, x);
    const Val picked = g.gather_rows(x, seq.masked_idx);

    const int hw = seq.hf * seq.wf;
    ReconstructedFeatures<S> out;
    MBEV_CHECK(int(seq.masked_idx.size()) ==
                   int(seq.target_views.size()) * kTimesteps * hw,
               Err::ShapeMismatch, "masked index set does not tile target views");
    int offset = 0;
    for (int view : seq.target_views) {
      typename ReconstructedFeatures<S>::Entry e;
      e.view = view;
      for (int t = 0; t < kTimesteps; ++t) {
        e.slice[t] = g.slice_rows(picked, offset, hw);
        offset += hw;
      }
      out.entries.push_back(e);
    }
    return out;
  }

  void collect(std::vector<nn::ParamTensor<S>*>& out) {
    out.push_back(&mask_token_);
    if (in_proj_) in_proj_->collect(out);
    for (auto& b : blocks_) b.collect(out);
    out_ln_.collect(out);
    if (out_proj_) out_proj_->collect(out);
  }

 private:
  MVRConfig cfg_;
  int channels_ = 0;
  nn::ParamTensor<S> mask_token_;
  std::optional<nn::LinearP<S>> in_proj_, out_proj_;
  std::vector<nn::TransformerBlockP<S>> blocks_;
  nn::LayerNormP<S> out_ln_;
  std::vector<S> pe2d_vals_;  // cached fixed grid embedding values
};

// Mean squared error between original and reconstructed masked-view tokens.
template <class S>
typename nn::Graph<S>::Val recon_loss(nn::Graph<S>& g, const FeatureGridVal<S>& f,
                                      const ReconstructedFeatures<S>& recon) {
  std::vector<typename nn::Graph<S>::Val> orig, pred;
  for (const auto& e : recon.entries)
    for (int t = 0; t < kTimesteps; ++t) {
      orig.push_back(f.slice[slice_index(e.view, t)]);
      pred.push_back(e.slice[t]);
    }
  MBEV_CHECK(!orig.empty(), Err::ShapeMismatch, "recon_loss with no masked views");
  return g.mse(g.concat_rows(orig), g.concat_rows(pred));
}

// Replace masked view slices with reconstructions; others pass through
// untouched (same graph nodes, so bit-identical).
template <class S>
FeatureGridVal<S> substitute(const FeatureGridVal<S>& f, const MaskPattern& pattern,
                             const ReconstructedFeatures<S>& recon) {
  FeatureGridVal<S> out = f;
  for (const auto& e : recon.entries) {
    MBEV_CHECK(pattern.masked[e.view], Err::ShapeMismatch,
               "substitute: reconstruction for an unmasked view");
    for (int t = 0; t < kTimesteps; ++t)
      out.slice[slice_index(e.view, t)] = e.slice[t];
  }
  return out;
}

// Mask-token fill for every masked slice; the no-reconstruction comparator.
template <class S>
FeatureGridVal<S> fill_masked(nn::Graph<S>& g, const FeatureGridVal<S>& f,
                              const MaskPattern& pattern,
                              MvrModuleT<S>& mvr, bool zeros_fill = false) {
  FeatureGridVal<S> out = f;
  if (pattern.empty()) return out;
  const int hw = f.hf * f.wf;
  typename nn::Graph<S>::Val fill =
      zeros_fill ? g.zeros(1, f.channels) : mvr.mask_token_node(g);
  for (int v = 0; v < kViews; ++v)
    if (pattern.masked[v]) {
      auto tile = g.tile_rows(fill, hw);
      for (int t = 0; t < kTimesteps; ++t) out.slice[slice_index(v, t)] = tile;
    }
  return out;
}

}  // namespace mbev
