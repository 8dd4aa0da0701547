// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mbev/config.hpp"
#include "mbev/detection.hpp"
#include "mbev/encoder.hpp"
#include "mbev/flops.hpp"
#include "mbev/metrics.hpp"
#include "mbev/mvr.hpp"

namespace mbev {

// Everything trainable plus the rig it was built for. One parameter registry
// covers the encoder, positional MLP, time embedding, reconstruction module,
// and detection head; the checkpoint is that registry plus a config snapshot.
template <class S>
class ModelT {
 public:
  using Graph = nn::Graph<S>;
  using Val = typename Graph::Val;

  ModelT(const ExperimentConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    rig_ = make_rig(cfg.rig.n_views, cfg.rig.hfov_deg, cfg.rig.yaw_spacing_deg,
                    cfg.rig.cam_height_m, cfg.rig.image_h, cfg.rig.image_w);
    Rng rng(derive_seed(init_seed, 0x10de1));
    encoder_ = EncoderT<S>(cfg.encoder, rng);
    pe3d_ = PE3DT<S>(rig_, cfg.hf(), cfg.wf(), cfg.encoder.patch,
                     cfg.encoder.channels, cfg.pe, rng);
    time_pe_ = TimePET<S>(cfg.encoder.channels, rng);
    mvr_ = MvrModuleT<S>(cfg.mvr, cfg.encoder.channels, rng);
    det_ = DetHeadT<S>(cfg.det, cfg.encoder.channels, rng);
  }

  const ExperimentConfig& config() const { return cfg_; }
  // For run-time overrides (mask ratio, variant, pe toggle, seeds). Decoder
  // shapes must stay fixed once parameters exist; sync_mvr_config enforces it.
  ExperimentConfig& mutable_config() { return cfg_; }
  void sync_mvr_config() {
    MBEV_CHECK(cfg_.mvr.decoder_layers == mvr_.config().decoder_layers &&
                   cfg_.mvr.decoder_dim == mvr_.config().decoder_dim &&
                   cfg_.mvr.heads == mvr_.config().heads &&
                   cfg_.mvr.mlp_ratio == mvr_.config().mlp_ratio,
               Err::BadConfig, "decoder shape cannot change after construction");
    mvr_.config() = cfg_.mvr;
  }
  const Rig& rig() const { return rig_; }
  EncoderT<S>& encoder() { return encoder_; }
  PE3DT<S>& pe3d() { return pe3d_; }
  TimePET<S>& time_pe() { return time_pe_; }
  MvrModuleT<S>& mvr() { return mvr_; }
  DetHeadT<S>& det() { return det_; }

  void set_encoder_frozen(bool flag) {
    encoder_.config() = set_frozen(encoder_.config(), flag);
  }
  void set_mvr_variant(MvrVariant v) {
    cfg_.mvr.variant = v;
    mvr_.config().variant = v;
  }

  std::vector<nn::ParamTensor<S>*> parameters() {
    std::vector<nn::ParamTensor<S>*> out;
    encoder_.collect(out);
    pe3d_.collect(out);
    time_pe_.collect(out);
    mvr_.collect(out);
    det_.collect(out);
    return out;
  }

  FeatureGridVal<S> encode_scene(Graph& g, const MultiViewFrame& frame) {
    return encoder_.encode(g, frame);
  }

  // Frustum embeddings, one node per view, built once per graph.
  std::array<Val, kViews> pe3d_nodes(Graph& g) {
    std::array<Val, kViews> out{};
    for (int v = 0; v < kViews; ++v) out[v] = pe3d_.fwd(g, v);
    return out;
  }

  // Token context for the detection head: every slice with its frustum and
  // time embedding added, concatenated view-major then timestep.
  Val detection_context(Graph& g, const FeatureGridVal<S>& grid,
                        const std::array<Val, kViews>& pe) {
    std::vector<Val> slots;
    for (int v = 0; v < kViews; ++v)
      for (int t = 0; t < kTimesteps; ++t)
        slots.push_back(g.add_rowvec(g.add(grid.slice[slice_index(v, t)], pe[v]),
                                     time_pe_.row(g, t)));
    return g.concat_rows(slots);
  }

  typename DetHeadT<S>::Output detect(Graph& g, const FeatureGridVal<S>& grid,
                                      const std::array<Val, kViews>& pe) {
    return det_.forward(g, detection_context(g, grid, pe));
  }

  DetectionSet extract_detections(const Graph& g,
                                  const typename DetHeadT<S>::Output& out) const {
    DetectionSet det;
    det.num_classes = cfg_.det.num_classes;
    const auto& lv = g.val(out.logits);
    const auto& bv = g.val(out.boxes_norm);
    det.logits.assign(lv.begin(), lv.end());
    det.boxes.assign(bv.begin(), bv.end());
    return det;
  }

 private:
  ExperimentConfig cfg_;
  Rig rig_;
  EncoderT<S> encoder_;
  PE3DT<S> pe3d_;
  TimePET<S> time_pe_;
  MvrModuleT<S> mvr_;
  DetHeadT<S> det_;
};

using Model = ModelT<float>;

// Checkpoint container: magic "MBEV-CK1", config snapshot, epoch, generator
// state, then a named-tensor table (name length, name bytes, rank, dims,
// f32 data), little-endian throughout.
struct CheckpointMeta {
  int epoch = 0;
  uint64_t rng_state = 0;
};

void save_checkpoint(const std::string& path, Model& model,
                     const CheckpointMeta& meta);
Model load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);
bool checkpoint_exists(const std::string& path);

}  // namespace mbev
