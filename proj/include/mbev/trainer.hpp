// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mbev/dataset.hpp"
#include "mbev/model.hpp"

namespace mbev {

struct PhaseStats {
  std::vector<double> epoch_total;
  std::vector<double> epoch_det;
  std::vector<double> epoch_recon;

  void save(const std::string& path) const;
  static PhaseStats load(const std::string& path);
};

// Detection-only training, no masking: the comparator model.
PhaseStats run_baseline_phase(Model& model, const Dataset& ds, bool verbose = true);

// Reconstruction-only training with the encoder frozen; encoder features are
// computed once and reused across epochs, which is exact under the freeze.
PhaseStats run_pretrain_phase(Model& model, const Dataset& ds, bool verbose = true);

// Joint objective: detection on substituted features plus the weighted
// reconstruction term. With use_mvr = false the masked slices stay filled
// with the (frozen) mask token: the reconstruction-free ablation.
PhaseStats run_finetune_phase(Model& model, const Dataset& ds, bool use_mvr = true,
                              bool verbose = true);

// Shared read-only evaluation over one dataset and one model; encoder
// features and frustum embeddings are cached up front.
class Evaluator {
 public:
  Evaluator(Model& model, const Dataset& ds);

  MetricsReport eval_pattern(const MaskPattern& pattern, bool use_mvr);

  struct ConditionReport {
    std::string label;
    MetricsReport mean;
    std::vector<MetricsReport> per_pattern;
  };
  ConditionReport eval_condition(const std::string& label,
                                 const std::vector<MaskPattern>& patterns,
                                 bool use_mvr);

  // Direct encode -> detect pass with no masking machinery at all.
  DetectionSet detect_plain(int scene_idx);
  // Detections for one scene under a pattern (reconstruction or token fill).
  DetectionSet detect_pattern(int scene_idx, const MaskPattern& pattern,
                              bool use_mvr);

  // Mean reconstruction / mask-token-fill MSE against the true features,
  // averaged over scenes and the given patterns.
  double recon_mse(const std::vector<MaskPattern>& patterns);
  double fill_mse(const std::vector<MaskPattern>& patterns);

  const std::vector<std::vector<EvalBox>>& gts() const { return gts_; }

 private:
  DetectionSet run_scene(int scene_idx, const MaskPattern& pattern, bool use_mvr);

  Model& model_;
  const Dataset& ds_;
  std::vector<FeatureGrid> cached_;
  std::array<std::vector<float>, kViews> pe_vals_;
  std::vector<std::vector<EvalBox>> gts_;
};

MetricsReport mean_report(const std::vector<MetricsReport>& reports);

}  // namespace mbev
