// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mbev/features.hpp"
#include "mbev/nn/blocks.hpp"
#include "mbev/positional.hpp"
#include "mbev/scene.hpp"

namespace mbev {

struct DetConfig {
  int num_queries = 30;
  int decoder_layers = 2;
  int decoder_dim = 64;
  int heads = 4;
  int mlp_ratio = 4;
  int num_classes = 4;
  double w_cls = 2.0;
  double w_box = 0.25;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double lambda_cls = 2.0;
  double lambda_box = 0.25;

  void validate() const {
    MBEV_CHECK(num_queries >= 1 && decoder_layers >= 1, Err::BadConfig, "det shape");
    MBEV_CHECK(decoder_dim % heads == 0, Err::BadConfig, "det dim % heads");
    MBEV_CHECK(focal_gamma >= 0 && focal_alpha >= 0 && focal_alpha <= 1,
               Err::BadConfig, "focal parameters");
  }
};

// Scales mapping world-space boxes into the normalized regression space.
struct BoxNorm {
  double radius = 22.0;   // |center.xy| extent
  double z_max = 4.0;     // center height extent
  double size_max = 6.0;  // box dimension scale
  double v_max = 6.0;     // velocity scale
};

inline constexpr int kBoxDims = 10;  // cx cy cz l w h sin cos vx vy

// Ground-truth box in normalized coordinates.
std::array<double, kBoxDims> encode_box(const Object3D& obj, const BoxNorm& n);

// Raw per-query outputs plus their normalized-box decoding.
struct DetectionSet {
  int num_classes = 0;
  std::vector<float> logits;     // [Q, num_classes + 1], last = no-object
  std::vector<float> boxes;      // [Q, 10], normalized
  int queries() const { return int(logits.size()) / (num_classes + 1); }

  // softmax over classes incl. no-object for one query
  std::vector<double> probs(int q) const;
};

struct WorldDetection {
  int class_id = 0;
  double score = 0;
  Vec3 center;
  double length = 0, width = 0, height = 0, yaw = 0, vx = 0, vy = 0;
};
std::vector<WorldDetection> decode_detections(const DetectionSet& det,
                                              const BoxNorm& norm);

// One record per (scene, query): score, class, world-space box.
void export_predictions(const std::string& path,
                        const std::vector<std::vector<WorldDetection>>& per_scene);
std::vector<std::vector<WorldDetection>> load_predictions(const std::string& path);

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (query, gt)
  double cost = 0;
};

// Exact min-cost matching of all ground-truth boxes to distinct queries.
// cost is row-major [num_queries, num_gts].
Assignment hungarian_match(const std::vector<double>& cost, int num_queries,
                           int num_gts);

// DETR-style set prediction head: learned queries cross-attend over all
// (view, timestep) tokens with frustum and time embeddings added.
template <class S>
class DetHeadT {
 public:
  using Val = typename nn::Graph<S>::Val;
  using Graph = nn::Graph<S>;

  DetHeadT() = default;
  DetHeadT(const DetConfig& cfg, int channels, Rng& rng)
      : cfg_(cfg), channels_(channels),
        queries_("det.queries", cfg.num_queries, channels),
        q_proj_("det.q_proj", channels, cfg.decoder_dim) {
    cfg_.validate();
    queries_.init_normal(rng, 0.02);
    q_proj_.init(rng);
    const int d = cfg.decoder_dim;
    for (int i = 0; i < cfg.decoder_layers; ++i) {
      const std::string base = "det.layer" + std::to_string(i);
      Layer l;
      l.ln_self = nn::LayerNormP<S>(base + ".ln_self", d);
      l.self_attn = nn::MhaP<S>(base + ".self", d, cfg.heads);
      l.self_attn.init(rng);
      l.ln_cross = nn::LayerNormP<S>(base + ".ln_cross", d);
      l.cross_attn = nn::CrossMhaP<S>(base + ".cross", d, channels, cfg.heads);
      l.cross_attn.init(rng);
      l.ln_mlp = nn::LayerNormP<S>(base + ".ln_mlp", d);
      l.mlp = nn::MlpP<S>(base + ".mlp", d, cfg.mlp_ratio * d);
      l.mlp.init(rng);
      layers_.push_back(std::move(l));
    }
    out_ln_ = nn::LayerNormP<S>("det.out_ln", cfg.decoder_dim);
    cls_head_ = nn::LinearP<S>("det.cls", cfg.decoder_dim, cfg.num_classes + 1);
    cls_head_.init(rng);
    box_head_ = nn::LinearP<S>("det.box", cfg.decoder_dim, kBoxDims);
    box_head_.init(rng);
  }

  const DetConfig& config() const { return cfg_; }

  struct Output {
    Val logits{};      // [Q, nc + 1]
    Val boxes_norm{};  // [Q, 10]
  };

  // ctx: [N, C] token matrix (positional content already added).
  Output forward(Graph& g, Val ctx) {
    Val q = q_proj_.fwd(g, g.param(queries_));
    for (auto& l : layers_) {
      auto h = l.ln_self.fwd(g, q);
      q = g.add(q, l.self_attn.fwd(g, h, h));
      q = g.add(q, l.cross_attn.fwd(g, l.ln_cross.fwd(g, q), ctx));
      q = g.add(q, l.mlp.fwd(g, l.ln_mlp.fwd(g, q)));
    }
    q = out_ln_.fwd(g, q);
    Output out;
    out.logits = cls_head_.fwd(g, q);
    out.boxes_norm = normalize_boxes(g, box_head_.fwd(g, q));
    return out;
  }

  void collect(std::vector<nn::ParamTensor<S>*>& out) {
    out.push_back(&queries_);
    q_proj_.collect(out);
    for (auto& l : layers_) {
      l.ln_self.collect(out);
      l.self_attn.collect(out);
      l.ln_cross.collect(out);
      l.cross_attn.collect(out);
      l.ln_mlp.collect(out);
      l.mlp.collect(out);
    }
    out_ln_.collect(out);
    cls_head_.collect(out);
    box_head_.collect(out);
  }

 private:
  // Raw head outputs to the normalized box space: centers through sigmoid
  // (xy signed, z positive), sizes through exp scaled by size_max, yaw as a
  // raw (sin, cos) pair, velocity raw.
  Val normalize_boxes(Graph& g, Val raw) {
    const S inv_smax = S(1.0 / 6.0);
    auto cxy = g.affine(g.sigmoid(g.slice_cols(raw, 0, 2)), S(2), S(-1));
    auto cz = g.sigmoid(g.slice_cols(raw, 2, 1));
    auto size = g.scale(g.exp_(g.slice_cols(raw, 3, 3)), inv_smax);
    auto rest = g.slice_cols(raw, 6, 4);
    return g.concat_cols({cxy, cz, size, rest});
  }

  struct Layer {
    nn::LayerNormP<S> ln_self, ln_cross, ln_mlp;
    nn::MhaP<S> self_attn;
    nn::CrossMhaP<S> cross_attn;
    nn::MlpP<S> mlp;
  };

  DetConfig cfg_;
  int channels_ = 0;
  nn::ParamTensor<S> queries_;
  nn::LinearP<S> q_proj_;
  std::vector<Layer> layers_;
  nn::LayerNormP<S> out_ln_;
  nn::LinearP<S> cls_head_, box_head_;
};

// Standard focal loss over all queries; unmatched queries target the
// no-object class. `targets` holds one class index per query.
template <class S>
typename nn::Graph<S>::Val focal_loss(nn::Graph<S>& g,
                                      typename nn::Graph<S>::Val logits,
                                      const std::vector<int>& targets,
                                      double alpha, double gamma) {
  auto probs = g.softmax_rows(logits);
  auto pt = g.take_per_row(probs, targets);
  return g.focal_from_probs(pt, S(alpha), S(gamma));
}

// Ground-truth target in regression space.
struct GtTarget {
  int class_id = 0;
  std::array<double, kBoxDims> box{};
};
std::vector<GtTarget> encode_targets(const Scene& scene, const BoxNorm& norm);

// Matching cost for the Hungarian step, row-major [Q, num_gts]:
// lambda_cls * (-p_gtclass) + lambda_box * L1 over the 8 pose dims
// (velocity is regressed but kept out of the matching cost).
std::vector<double> matching_cost(const DetectionSet& det,
                                  const std::vector<GtTarget>& gts,
                                  double lambda_cls, double lambda_box);

// w_cls * focal + w_box * mean L1 over matched normalized boxes.
template <class S>
typename nn::Graph<S>::Val det_loss(nn::Graph<S>& g,
                                    const typename DetHeadT<S>::Output& out,
                                    const std::vector<GtTarget>& gts,
                                    const Assignment& assign, const DetConfig& cfg) {
  std::vector<int> targets(size_t(g.rows(out.logits)), cfg.num_classes);
  std::vector<int> matched_queries;
  std::vector<S> gt_rows;
  for (auto [q, t] : assign.pairs) {
    targets[q] = gts[t].class_id;
    matched_queries.push_back(q);
    for (double x : gts[t].box) gt_rows.push_back(S(x));
  }
  auto cls = focal_loss(g, out.logits, targets, cfg.focal_alpha, cfg.focal_gamma);
  auto total = g.scale(cls, S(cfg.w_cls));
  if (!assign.pairs.empty()) {
    auto pred = g.gather_rows(out.boxes_norm, matched_queries);
    auto gt = g.input(int(assign.pairs.size()), kBoxDims, gt_rows);
    total = g.add(total, g.scale(g.l1_mean(pred, gt), S(cfg.w_box)));
  }
  return total;
}

}  // namespace mbev
