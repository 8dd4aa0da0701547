// SPDX-License-Identifier: Apache-2.0
#include "mbev/grid.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>

#include <json.hpp>

#include "mbev/flops.hpp"

namespace mbev {

namespace fs = std::filesystem;
using nlohmann::json;

Dataset generate_dataset(const ExperimentConfig& cfg, int n_scenes, uint64_t seed) {
  MBEV_CHECK(n_scenes >= 1, Err::BadConfig, "dataset needs at least one scene");
  const Rig rig = make_rig(cfg.rig.n_views, cfg.rig.hfov_deg, cfg.rig.yaw_spacing_deg,
                           cfg.rig.cam_height_m, cfg.rig.image_h, cfg.rig.image_w);
  Dataset ds;
  ds.height = cfg.rig.image_h;
  ds.width = cfg.rig.image_w;
  Rng rng(derive_seed(seed, 0xda7a));
  for (int i = 0; i < n_scenes; ++i) {
    ds.scenes.push_back(sample_scene(rng, cfg.scene, rig, i));
    ds.frames.push_back(render_frame(ds.scenes.back(), rig));
  }
  return ds;
}

namespace {

std::string view_condition(int v) { return "missing_" + Rig::view_name(v); }

json report_to_json(const MetricsReport& r) {
  return {{"mAP", r.mAP},       {"mATE", r.mATE},         {"mASE", r.mASE},
          {"mAOE", r.mAOE},     {"NDS_like", r.nds_like}, {"tp_count", r.tp_count},
          {"per_class_AP", r.per_class_ap}};
}

json rows_to_json(const std::vector<GridRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"condition", r.condition},
                   {"method", r.method},
                   {"n_patterns", r.n_patterns},
                   {"report", report_to_json(r.report)}});
  return out;
}

// Lazily loaded models + evaluators keyed by checkpoint file.
class ModelPool {
 public:
  ModelPool(const std::string& dir, const std::string& eval_path)
      : dir_(dir), ds_(read_dataset(eval_path)) {}

  Evaluator& evaluator(const std::string& name) {
    auto it = evals_.find(name);
    if (it != evals_.end()) return *it->second.eval;
    const std::string path = (fs::path(dir_) / name).string();
    Entry e;
    e.model = std::make_unique<Model>(load_checkpoint(path));
    e.eval = std::make_unique<Evaluator>(*e.model, ds_);
    auto [pos, _] = evals_.emplace(name, std::move(e));
    return *pos->second.eval;
  }

  bool available(const std::string& name) const {
    return checkpoint_exists((fs::path(dir_) / name).string());
  }

  const Dataset& dataset() const { return ds_; }

 private:
  struct Entry {
    std::unique_ptr<Model> model;
    std::unique_ptr<Evaluator> eval;
  };
  std::string dir_;
  Dataset ds_;
  std::map<std::string, Entry> evals_;
};

GridRow make_row(const std::string& condition, const std::string& method,
                 Evaluator& ev, const std::vector<MaskPattern>& patterns,
                 bool use_mvr) {
  GridRow row;
  row.condition = condition;
  row.method = method;
  row.n_patterns = int(patterns.size());
  row.report = ev.eval_condition(condition + "/" + method, patterns, use_mvr).mean;
  return row;
}

}  // namespace

namespace ckpt {
std::string ratio_name(double ratio) {
  return "mbev_local_r" + std::to_string(int(std::lround(ratio * 100))) + ".ck";
}
}  // namespace ckpt

GridResult run_grid(const GridRequest& request, const std::string& models_dir,
                    const std::string& eval_dataset_path,
                    const std::string& out_dir) {
  ModelPool pool(models_dir, eval_dataset_path);
  GridResult result;

  if (request.singleview) {
    for (int v = 0; v < kViews; ++v) {
      MaskPattern p;
      p.masked[v] = true;
      result.singleview.push_back(make_row(view_condition(v), "baseline",
                                           pool.evaluator(ckpt::kBaseline), {p},
                                           false));
      result.singleview.push_back(make_row(view_condition(v), "mbev_local",
                                           pool.evaluator(ckpt::kMbevLocal), {p},
                                           true));
    }
  }

  if (request.ksweep) {
    for (int k = 0; k <= 5; ++k) {
      const auto patterns = enumerate_patterns(k);
      const std::string cond = "missing_k" + std::to_string(k);
      result.ksweep.push_back(make_row(cond, "baseline",
                                       pool.evaluator(ckpt::kBaseline), patterns,
                                       false));
      result.ksweep.push_back(make_row(cond, "mbev_global",
                                       pool.evaluator(ckpt::kMbevGlobal), patterns,
                                       true));
      result.ksweep.push_back(make_row(cond, "mbev_local",
                                       pool.evaluator(ckpt::kMbevLocal), patterns,
                                       true));
    }
  }

  if (request.ablations) {
    const auto single = enumerate_patterns(1);
    result.ablations.push_back(make_row("single_missing_avg", "full",
                                        pool.evaluator(ckpt::kMbevLocal), single,
                                        true));
    result.ablations.push_back(make_row("single_missing_avg", "no_finetune",
                                        pool.evaluator(ckpt::kPretrainLocal), single,
                                        true));
    result.ablations.push_back(make_row("single_missing_avg", "no_pe",
                                        pool.evaluator(ckpt::kMbevNoPe), single,
                                        true));
    result.ablations.push_back(make_row("single_missing_avg", "no_mvr",
                                        pool.evaluator(ckpt::kMbevNoMvr), single,
                                        false));
  }

  for (double ratio : request.ratio_sweep) {
    const std::string name = ckpt::ratio_name(ratio);
    MBEV_CHECK(pool.available(name), Err::MissingCheckpoint,
               "ratio sweep needs checkpoint " + name);
    const auto single = enumerate_patterns(1);
    result.ratio.push_back(make_row("ratio_" + std::to_string(int(ratio * 100)),
                                    "mbev_local", pool.evaluator(name), single,
                                    true));
  }

  // The flops table only needs the config; take it from the baseline model
  // when present, else from the local model.
  const std::string cfg_src = pool.available(ckpt::kBaseline)
                                  ? ckpt::kBaseline
                                  : ckpt::kMbevLocal;
  Model cfg_model = load_checkpoint((fs::path(models_dir) / cfg_src).string());
  write_grid_reports(result, cfg_model.config(), out_dir);
  return result;
}

void write_grid_reports(const GridResult& result, const ExperimentConfig& cfg,
                        const std::string& out_dir) {
  fs::create_directories(out_dir);
  json root;
  root["singleview"] = rows_to_json(result.singleview);
  root["ksweep"] = rows_to_json(result.ksweep);
  root["ablations"] = rows_to_json(result.ablations);
  root["ratio"] = rows_to_json(result.ratio);

  // Analytic compute accounting at this config.
  {
    MaskPattern one;
    one.masked[0] = true;
    MaskPattern none;
    ExperimentConfig local_cfg = cfg;
    local_cfg.mvr.variant = MvrVariant::Local;
    ExperimentConfig global_cfg = cfg;
    global_cfg.mvr.variant = MvrVariant::Global;
    json flops;
    auto put = [&](const char* key, const ExperimentConfig& c, const MaskPattern& p) {
      const auto f = flop_count(c, p);
      flops[key] = {{"encoder", f.encoder},
                    {"pe3d", f.pe3d},
                    {"detection", f.detection},
                    {"mvr", f.mvr},
                    {"total", f.total()},
                    {"mvr_fraction", f.mvr_fraction()}};
    };
    put("no_missing", local_cfg, none);
    put("local_1_missing", local_cfg, one);
    put("global_1_missing", global_cfg, one);
    root["flops"] = flops;
  }

  std::ofstream js((fs::path(out_dir) / "report.json").string());
  MBEV_CHECK(js.good(), Err::TruncatedFile, "cannot write grid report");
  js << root.dump(1) << "\n";

  // Sweep plot data: one line per missing-view count and method.
  std::ofstream csv((fs::path(out_dir) / "plot_ksweep.csv").string());
  csv << "k,method,mAP,NDS_like\n";
  for (const auto& row : result.ksweep) {
    const int k = row.condition.back() - '0';
    csv << k << "," << row.method << "," << row.report.mAP << ","
        << row.report.nds_like << "\n";
  }

  std::ofstream txt((fs::path(out_dir) / "report.txt").string());
  auto dump_rows = [&](const char* title, const std::vector<GridRow>& rows) {
    if (rows.empty()) return;
    txt << "== " << title << " ==\n";
    for (const auto& r : rows) {
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "%-24s %-12s patterns=%-3d mAP=%.4f NDS=%.4f mATE=%.3f "
                    "mASE=%.3f mAOE=%.3f\n",
                    r.condition.c_str(), r.method.c_str(), r.n_patterns,
                    r.report.mAP, r.report.nds_like, r.report.mATE, r.report.mASE,
                    r.report.mAOE);
      txt << buf;
    }
    txt << "\n";
  };
  dump_rows("single view missing", result.singleview);
  dump_rows("missing-count sweep", result.ksweep);
  dump_rows("ablations", result.ablations);
  dump_rows("mask ratio sweep", result.ratio);
}

}  // namespace mbev
