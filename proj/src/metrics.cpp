// SPDX-License-Identifier: Apache-2.0
#include "mbev/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace mbev {

namespace {

const double kApThresholds[4] = {0.5, 1.0, 2.0, 4.0};
constexpr double kTpThreshold = 2.0;
constexpr int kApPoints = 41;

double bev_dist(const EvalBox& a, const EvalBox& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

double aligned_iou(const EvalBox& a, const EvalBox& b) {
  const double inter = std::min(a.l, b.l) * std::min(a.w, b.w) * std::min(a.h, b.h);
  const double uni = a.l * a.w * a.h + b.l * b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double yaw_error(const EvalBox& a, const EvalBox& b) {
  double d = std::abs(wrap_angle(a.yaw - b.yaw));
  return d;
}

struct RankedPred {
  double score;
  int scene;
  int idx;
};

// AP for one class at one distance threshold across the whole scene set.
// Returns -1 when the class has no ground truth.
double class_ap(const std::vector<std::vector<EvalBox>>& preds,
                const std::vector<std::vector<EvalBox>>& gts, int cls,
                double threshold,
                std::vector<std::pair<int, int>>* tp_out = nullptr,
                std::vector<int>* tp_scene_out = nullptr) {
  std::vector<RankedPred> ranked;
  int n_gt = 0;
  for (size_t s = 0; s < gts.size(); ++s)
    for (const auto& g : gts[s]) n_gt += (g.class_id == cls);
  if (n_gt == 0) return -1.0;
  for (size_t s = 0; s < preds.size(); ++s)
    for (size_t i = 0; i < preds[s].size(); ++i)
      if (preds[s][i].class_id == cls)
        ranked.push_back({preds[s][i].score, int(s), int(i)});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedPred& a, const RankedPred& b) {
                     return a.score > b.score;
                   });

  std::vector<std::vector<char>> taken(gts.size());
  for (size_t s = 0; s < gts.size(); ++s) taken[s].assign(gts[s].size(), 0);

  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& r : ranked) {
    const auto& p = preds[r.scene][r.idx];
    int best = -1;
    double best_d = threshold;
    for (size_t gi = 0; gi < gts[r.scene].size(); ++gi) {
      const auto& g = gts[r.scene][gi];
      if (g.class_id != cls || taken[r.scene][gi]) continue;
      const double d = bev_dist(p, g);
      if (d <= best_d) {
        best_d = d;
        best = int(gi);
      }
    }
    if (best >= 0) {
      taken[r.scene][best] = 1;
      ++tp;
      if (tp_out) {
        tp_out->push_back({r.idx, best});
        tp_scene_out->push_back(r.scene);
      }
    } else {
      ++fp;
    }
    precision.push_back(double(tp) / double(tp + fp));
    recall.push_back(double(tp) / double(n_gt));
  }

  double ap = 0;
  for (int k = 0; k < kApPoints; ++k) {
    const double r = double(k) / double(kApPoints - 1);
    double best = 0;
    for (size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= r) best = std::max(best, precision[i]);
    ap += best;
  }
  return ap / kApPoints;
}

}  // namespace

EvalBox to_eval_box(const WorldDetection& d) {
  return {d.class_id, d.score, d.center.x, d.center.y,
          d.length,   d.width, d.height,   d.yaw};
}

EvalBox to_eval_box(const Object3D& o) {
  return {o.class_id, 1.0,     o.center.x, o.center.y,
          o.length,   o.width, o.height,   o.yaw};
}

MatchResult match_for_metrics(const std::vector<EvalBox>& preds,
                              const std::vector<EvalBox>& gts,
                              double threshold_m) {
  MBEV_CHECK(threshold_m > 0, Err::BadConfig, "threshold must be positive");
  MatchResult out;
  std::vector<int> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[a].score > preds[b].score;
  });
  std::vector<char> taken(gts.size(), 0);
  for (int pi : order) {
    int best = -1;
    double best_d = threshold_m;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi] || gts[gi].class_id != preds[pi].class_id) continue;
      const double d = bev_dist(preds[pi], gts[gi]);
      if (d <= best_d) {
        best_d = d;
        best = int(gi);
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      out.tp.push_back({pi, best});
    } else {
      out.fp.push_back(pi);
    }
  }
  for (size_t gi = 0; gi < gts.size(); ++gi)
    if (!taken[gi]) out.fn.push_back(int(gi));
  return out;
}

double compute_map(const std::vector<std::vector<EvalBox>>& preds_per_scene,
                   const std::vector<std::vector<EvalBox>>& gts_per_scene,
                   int num_classes, std::vector<double>* per_class_ap) {
  double sum = 0;
  int counted = 0;
  if (per_class_ap) per_class_ap->assign(num_classes, -1.0);
  for (int c = 0; c < num_classes; ++c) {
    double class_sum = 0;
    int class_n = 0;
    for (double th : kApThresholds) {
      const double ap = class_ap(preds_per_scene, gts_per_scene, c, th);
      if (ap < 0) continue;
      class_sum += ap;
      ++class_n;
    }
    if (class_n == 0) continue;
    const double mean_ap = class_sum / class_n;
    if (per_class_ap) (*per_class_ap)[c] = mean_ap;
    sum += mean_ap;
    ++counted;
  }
  return counted ? sum / counted : 0.0;
}

MetricsReport compute_metrics(const std::vector<std::vector<EvalBox>>& preds_per_scene,
                              const std::vector<std::vector<EvalBox>>& gts_per_scene,
                              int num_classes) {
  MetricsReport rep;
  rep.mAP = compute_map(preds_per_scene, gts_per_scene, num_classes,
                        &rep.per_class_ap);

  // True-positive errors from the 2 m matches, pooled over classes.
  double ate = 0, ase = 0, aoe = 0;
  int n_tp = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::pair<int, int>> tps;
    std::vector<int> tp_scenes;
    const double ap =
        class_ap(preds_per_scene, gts_per_scene, c, kTpThreshold, &tps, &tp_scenes);
    if (ap < 0) continue;
    for (size_t i = 0; i < tps.size(); ++i) {
      const auto& p = preds_per_scene[tp_scenes[i]][tps[i].first];
      const auto& g = gts_per_scene[tp_scenes[i]][tps[i].second];
      ate += bev_dist(p, g);
      ase += 1.0 - aligned_iou(p, g);
      aoe += yaw_error(p, g);
      ++n_tp;
    }
  }
  rep.tp_count = n_tp;
  if (n_tp > 0) {
    rep.mATE = ate / n_tp;
    rep.mASE = ase / n_tp;
    rep.mAOE = aoe / n_tp;
  } else {
    // no matches: error terms pegged at their norms so they contribute zero
    rep.mATE = 2.0;
    rep.mASE = 1.0;
    rep.mAOE = M_PI;
  }
  rep.nds_like = compute_nds_like(rep);
  return rep;
}

double compute_nds_like(const MetricsReport& report) {
  const double norms[3] = {2.0, 1.0, M_PI};
  const double errs[3] = {report.mATE, report.mASE, report.mAOE};
  double sum = 4.0 * report.mAP;
  for (int i = 0; i < 3; ++i)
    sum += 1.0 - std::min(1.0, errs[i] / norms[i]);
  return sum / 7.0;
}

}  // namespace mbev
