// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "mbev/detection.hpp"
#include "mbev/encoder.hpp"
#include "mbev/masking.hpp"
#include "mbev/mvr.hpp"
#include "mbev/positional.hpp"
#include "mbev/scene.hpp"

namespace mbev {

struct RigConfig {
  int n_views = 6;
  double hfov_deg = 70.0;
  double yaw_spacing_deg = 60.0;
  double cam_height_m = 1.5;
  int image_h = 32;
  int image_w = 64;
};

struct DataConfig {
  int n_scenes = 96;
  int n_eval_scenes = 32;
  uint64_t seed = 1234;
};

struct TrainConfig {
  int batch = 4;
  int baseline_epochs = 30;
  int pretrain_epochs = 12;
  int finetune_epochs = 12;
  double lr_baseline = 3e-3;
  double lr_pretrain = 2e-3;
  double lr_finetune = 8e-4;
  double alpha = 0.05;  // reconstruction-loss weight during fine-tuning
  double weight_decay = 1e-2;
  uint64_t seed = 0;
  double p_keep_all_finetune = 0.2;

  // Training scale of the full-size setup this artifact shrinks from.
  static TrainConfig reference_scale() {
    TrainConfig t;
    t.finetune_epochs = 48;
    t.lr_finetune = 2e-4;
    return t;
  }
};

struct ExperimentConfig {
  RigConfig rig;
  SceneParams scene;
  DataConfig data;
  EncoderConfig encoder{8, 96, 4, false};
  PEConfig pe;
  MVRConfig mvr;
  DetConfig det;
  std::array<double, kViews> k_probs = {0.0, 0.2, 0.2, 0.2, 0.2, 0.2};
  MaskGranularity granularity = MaskGranularity::PerEpoch;
  TrainConfig train;
  bool zeros_fill = false;  // masked-view fill for the no-reconstruction path

  int hf() const { return rig.image_h / encoder.patch; }
  int wf() const { return rig.image_w / encoder.patch; }
  BoxNorm box_norm() const {
    BoxNorm n;
    n.radius = scene.world_radius_m;
    n.v_max = std::max(1.0, scene.speed_max_mps);
    return n;
  }
  MaskSchedule schedule(double p_keep_all = 0.0) const {
    return MaskSchedule::make(k_probs, granularity, p_keep_all,
                              derive_seed(train.seed, 0x5eedu));
  }
  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);
std::string dump_experiment_config(const ExperimentConfig& cfg);
ExperimentConfig parse_experiment_config(const std::string& json_text);

}  // namespace mbev
