// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mbev/trainer.hpp"

namespace mbev {

// Procedural dataset for a config: scenes sampled and rendered from one seed.
Dataset generate_dataset(const ExperimentConfig& cfg, int n_scenes, uint64_t seed);

// Conventional checkpoint names inside a run directory.
namespace ckpt {
inline constexpr const char* kBaseline = "baseline.ck";
inline constexpr const char* kPretrainLocal = "pretrain_local.ck";
inline constexpr const char* kMbevLocal = "mbev_local.ck";
inline constexpr const char* kPretrainGlobal = "pretrain_global.ck";
inline constexpr const char* kMbevGlobal = "mbev_global.ck";
inline constexpr const char* kMbevNoMvr = "mbev_nomvr.ck";
inline constexpr const char* kPretrainNoPe = "pretrain_nope.ck";
inline constexpr const char* kMbevNoPe = "mbev_nope.ck";
std::string ratio_name(double ratio);
}  // namespace ckpt

struct GridRequest {
  bool singleview = true;
  bool ksweep = true;
  bool ablations = true;
  bool flops = true;
  std::vector<double> ratio_sweep;  // evaluated only when their models exist
};

// Labeled evaluation rows, one per condition, mirrored into the reports.
struct GridRow {
  std::string condition;
  std::string method;
  int n_patterns = 0;
  MetricsReport report;
};

struct GridResult {
  std::vector<GridRow> singleview;
  std::vector<GridRow> ksweep;
  std::vector<GridRow> ablations;
  std::vector<GridRow> ratio;
};

// Evaluates existing checkpoints over the experiment grid and writes
// report JSON, a human-readable summary, and sweep plot data into out_dir.
GridResult run_grid(const GridRequest& request, const std::string& models_dir,
                    const std::string& eval_dataset_path,
                    const std::string& out_dir);

void write_grid_reports(const GridResult& result, const ExperimentConfig& cfg,
                        const std::string& out_dir);

}  // namespace mbev
