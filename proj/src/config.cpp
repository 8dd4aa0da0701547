// SPDX-License-Identifier: Apache-2.0
#include "mbev/config.hpp"

#include <fstream>

#include <json.hpp>

namespace mbev {

using nlohmann::json;

namespace {

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void ExperimentConfig::validate() const {
  MBEV_CHECK(rig.n_views == kViews, Err::BadConfig, "rig must have 6 views");
  MBEV_CHECK(rig.hfov_deg > rig.yaw_spacing_deg, Err::NoOverlap,
             "hfov must exceed yaw spacing");
  encoder.validate(rig.image_h, rig.image_w);
  MBEV_CHECK(encoder.channels % 4 == 0, Err::BadConfig,
             "channels must be divisible by 4 for the 2D embedding");
  mvr.validate();
  det.validate();
  MBEV_CHECK(det.num_queries >= scene.n_objects_max, Err::BadConfig,
             "need at least as many queries as the max object count");
  MBEV_CHECK(train.alpha >= 0, Err::BadConfig, "alpha must be non-negative");
  MBEV_CHECK(train.batch >= 1 && train.baseline_epochs >= 1 &&
                 train.pretrain_epochs >= 1 && train.finetune_epochs >= 1,
             Err::BadConfig, "training schedule");
  MBEV_CHECK(train.lr_baseline > 0 && train.lr_pretrain > 0 && train.lr_finetune > 0,
             Err::BadConfig, "learning rates must be positive");
  (void)schedule();  // probability + boundary checks
  MBEV_CHECK(wf() >= 3, Err::BadConfig, "feature grid too narrow");
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Err::BadConfig, std::string("config parse failure: ") + e.what());
  }
  ExperimentConfig cfg;
  if (j.contains("rig")) {
    const auto& r = j["rig"];
    get_if(r, "n_views", cfg.rig.n_views);
    get_if(r, "hfov_deg", cfg.rig.hfov_deg);
    get_if(r, "yaw_spacing_deg", cfg.rig.yaw_spacing_deg);
    get_if(r, "cam_height_m", cfg.rig.cam_height_m);
    get_if(r, "image_h", cfg.rig.image_h);
    get_if(r, "image_w", cfg.rig.image_w);
  }
  if (j.contains("scene")) {
    const auto& s = j["scene"];
    get_if(s, "n_objects_min", cfg.scene.n_objects_min);
    get_if(s, "n_objects_max", cfg.scene.n_objects_max);
    get_if(s, "n_classes", cfg.scene.n_classes);
    get_if(s, "world_radius_m", cfg.scene.world_radius_m);
    get_if(s, "speed_max_mps", cfg.scene.speed_max_mps);
    get_if(s, "ego_speed_max_mps", cfg.scene.ego_speed_max_mps);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    get_if(d, "n_scenes", cfg.data.n_scenes);
    get_if(d, "n_eval_scenes", cfg.data.n_eval_scenes);
    get_if(d, "seed", cfg.data.seed);
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    get_if(e, "patch", cfg.encoder.patch);
    get_if(e, "channels", cfg.encoder.channels);
    get_if(e, "depth", cfg.encoder.depth);
  }
  if (j.contains("pe")) {
    const auto& p = j["pe"];
    get_if(p, "depth_bins", cfg.pe.depth_bins);
    get_if(p, "depth_min_m", cfg.pe.depth_min_m);
    get_if(p, "depth_max_m", cfg.pe.depth_max_m);
    get_if(p, "extent_m", cfg.pe.extent_m);
  }
  if (j.contains("mvr")) {
    const auto& m = j["mvr"];
    if (m.contains("variant")) {
      const std::string v = m["variant"].get<std::string>();
      MBEV_CHECK(v == "local" || v == "global", Err::BadConfig,
                 "mvr.variant must be local or global");
      cfg.mvr.variant = v == "local" ? MvrVariant::Local : MvrVariant::Global;
    }
    get_if(m, "mask_ratio", cfg.mvr.mask_ratio);
    get_if(m, "decoder_layers", cfg.mvr.decoder_layers);
    get_if(m, "decoder_dim", cfg.mvr.decoder_dim);
    get_if(m, "heads", cfg.mvr.heads);
    get_if(m, "mlp_ratio", cfg.mvr.mlp_ratio);
    get_if(m, "pe_enabled", cfg.mvr.pe_enabled);
  }
  if (j.contains("det")) {
    const auto& d = j["det"];
    get_if(d, "num_queries", cfg.det.num_queries);
    get_if(d, "decoder_layers", cfg.det.decoder_layers);
    get_if(d, "decoder_dim", cfg.det.decoder_dim);
    get_if(d, "heads", cfg.det.heads);
    get_if(d, "mlp_ratio", cfg.det.mlp_ratio);
    get_if(d, "w_cls", cfg.det.w_cls);
    get_if(d, "w_box", cfg.det.w_box);
    get_if(d, "focal_alpha", cfg.det.focal_alpha);
    get_if(d, "focal_gamma", cfg.det.focal_gamma);
    get_if(d, "lambda_cls", cfg.det.lambda_cls);
    get_if(d, "lambda_box", cfg.det.lambda_box);
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    if (s.contains("k_probs")) {
      const auto v = s["k_probs"].get<std::vector<double>>();
      MBEV_CHECK(v.size() == kViews, Err::BadConfig,
                 "k_probs must list P(k) for k = 0..5; all six views may not fail");
      for (int i = 0; i < kViews; ++i) cfg.k_probs[i] = v[i];
    }
    if (s.contains("granularity")) {
      const std::string gr = s["granularity"].get<std::string>();
      MBEV_CHECK(gr == "per_epoch" || gr == "per_iteration", Err::BadConfig,
                 "granularity must be per_epoch or per_iteration");
      cfg.granularity = gr == "per_epoch" ? MaskGranularity::PerEpoch
                                          : MaskGranularity::PerIteration;
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    get_if(t, "batch", cfg.train.batch);
    get_if(t, "baseline_epochs", cfg.train.baseline_epochs);
    get_if(t, "pretrain_epochs", cfg.train.pretrain_epochs);
    get_if(t, "finetune_epochs", cfg.train.finetune_epochs);
    get_if(t, "lr_baseline", cfg.train.lr_baseline);
    get_if(t, "lr_pretrain", cfg.train.lr_pretrain);
    get_if(t, "lr_finetune", cfg.train.lr_finetune);
    get_if(t, "alpha", cfg.train.alpha);
    get_if(t, "weight_decay", cfg.train.weight_decay);
    get_if(t, "seed", cfg.train.seed);
    get_if(t, "p_keep_all_finetune", cfg.train.p_keep_all_finetune);
  }
  get_if(j, "zeros_fill", cfg.zeros_fill);
  cfg.det.num_classes = cfg.scene.n_classes;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  MBEV_CHECK(in.good(), Err::BadConfig, "cannot open config " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string dump_experiment_config(const ExperimentConfig& cfg) {
  json j;
  j["rig"] = {{"n_views", cfg.rig.n_views},
              {"hfov_deg", cfg.rig.hfov_deg},
              {"yaw_spacing_deg", cfg.rig.yaw_spacing_deg},
              {"cam_height_m", cfg.rig.cam_height_m},
              {"image_h", cfg.rig.image_h},
              {"image_w", cfg.rig.image_w}};
  j["scene"] = {{"n_objects_min", cfg.scene.n_objects_min},
                {"n_objects_max", cfg.scene.n_objects_max},
                {"n_classes", cfg.scene.n_classes},
                {"world_radius_m", cfg.scene.world_radius_m},
                {"speed_max_mps", cfg.scene.speed_max_mps},
                {"ego_speed_max_mps", cfg.scene.ego_speed_max_mps}};
  j["data"] = {{"n_scenes", cfg.data.n_scenes},
               {"n_eval_scenes", cfg.data.n_eval_scenes},
               {"seed", cfg.data.seed}};
  j["encoder"] = {{"patch", cfg.encoder.patch},
                  {"channels", cfg.encoder.channels},
                  {"depth", cfg.encoder.depth}};
  j["pe"] = {{"depth_bins", cfg.pe.depth_bins},
             {"depth_min_m", cfg.pe.depth_min_m},
             {"depth_max_m", cfg.pe.depth_max_m},
             {"extent_m", cfg.pe.extent_m}};
  j["mvr"] = {{"variant", cfg.mvr.variant == MvrVariant::Local ? "local" : "global"},
              {"mask_ratio", cfg.mvr.mask_ratio},
              {"decoder_layers", cfg.mvr.decoder_layers},
              {"decoder_dim", cfg.mvr.decoder_dim},
              {"heads", cfg.mvr.heads},
              {"mlp_ratio", cfg.mvr.mlp_ratio},
              {"pe_enabled", cfg.mvr.pe_enabled}};
  j["det"] = {{"num_queries", cfg.det.num_queries},
              {"decoder_layers", cfg.det.decoder_layers},
              {"decoder_dim", cfg.det.decoder_dim},
              {"heads", cfg.det.heads},
              {"mlp_ratio", cfg.det.mlp_ratio},
              {"w_cls", cfg.det.w_cls},
              {"w_box", cfg.det.w_box},
              {"focal_alpha", cfg.det.focal_alpha},
              {"focal_gamma", cfg.det.focal_gamma},
              {"lambda_cls", cfg.det.lambda_cls},
              {"lambda_box", cfg.det.lambda_box}};
  j["schedule"] = {{"k_probs", cfg.k_probs},
                   {"granularity", cfg.granularity == MaskGranularity::PerEpoch
                                       ? "per_epoch"
                                       : "per_iteration"}};
  j["train"] = {{"batch", cfg.train.batch},
                {"baseline_epochs", cfg.train.baseline_epochs},
                {"pretrain_epochs", cfg.train.pretrain_epochs},
                {"finetune_epochs", cfg.train.finetune_epochs},
                {"lr_baseline", cfg.train.lr_baseline},
                {"lr_pretrain", cfg.train.lr_pretrain},
                {"lr_finetune", cfg.train.lr_finetune},
                {"alpha", cfg.train.alpha},
                {"weight_decay", cfg.train.weight_decay},
                {"seed", cfg.train.seed},
                {"p_keep_all_finetune", cfg.train.p_keep_all_finetune}};
  j["zeros_fill"] = cfg.zeros_fill;
  return j.dump(1);
}

}  // namespace mbev
