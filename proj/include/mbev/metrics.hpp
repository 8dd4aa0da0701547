// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mbev/detection.hpp"
#include "mbev/scene.hpp"

namespace mbev {

// Detection/ground-truth record reduced to what the metrics need.
struct EvalBox {
  int class_id = 0;
  double score = 0;  // unused for ground truth
  double x = 0, y = 0;
  double l = 1, w = 1, h = 1;
  double yaw = 0;
};

EvalBox to_eval_box(const WorldDetection& d);
EvalBox to_eval_box(const Object3D& o);

struct MetricsReport {
  double mAP = 0;
  double mATE = 0;      // meters, BEV center distance over TPs at 2 m
  double mASE = 0;      // 1 - aligned IoU
  double mAOE = 0;      // radians
  double nds_like = 0;
  std::vector<double> per_class_ap;  // at the same thresholds, -1 if absent
  int tp_count = 0;
};

// Greedy score-descending matching by BEV center distance for one scene and
// one class set; each ground truth matches at most once.
struct MatchResult {
  std::vector<std::pair<int, int>> tp;  // (pred index, gt index)
  std::vector<int> fp;                  // pred indices
  std::vector<int> fn;                  // gt indices
};
MatchResult match_for_metrics(const std::vector<EvalBox>& preds,
                              const std::vector<EvalBox>& gts,
                              double threshold_m);

// Average precision with 41-point interpolation, per class, averaged over
// the distance thresholds {0.5, 1, 2, 4} m and over classes with ground
// truth present.
double compute_map(const std::vector<std::vector<EvalBox>>& preds_per_scene,
                   const std::vector<std::vector<EvalBox>>& gts_per_scene,
                   int num_classes, std::vector<double>* per_class_ap = nullptr);

// Full report: mAP plus true-positive errors collected from 2 m matches.
MetricsReport compute_metrics(const std::vector<std::vector<EvalBox>>& preds_per_scene,
                              const std::vector<std::vector<EvalBox>>& gts_per_scene,
                              int num_classes);

// (4 * mAP + sum_e (1 - min(1, e / norm_e))) / 7 with norms (2 m, 1, pi).
// Error terms contribute zero when there are no true positives.
double compute_nds_like(const MetricsReport& report);

}  // namespace mbev
