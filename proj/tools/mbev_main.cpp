// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: dataset generation, the three training phases,
// evaluation, the experiment grid, and compute accounting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "mbev/dataset.hpp"
#include "mbev/flops.hpp"
#include "mbev/grid.hpp"
#include "mbev/model.hpp"
#include "mbev/trainer.hpp"

namespace fs = std::filesystem;
using namespace mbev;

namespace {

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config file");
  if (config_required) opt->required();
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--seed", c.seed, "seed override");
}

ExperimentConfig load_cfg(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config);
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.data.seed = *c.seed;
  }
  return cfg;
}

Model load_model(const std::string& path, const std::optional<uint64_t>& seed) {
  Model model = load_checkpoint(path);
  if (seed) model.mutable_config().train.seed = *seed;
  return model;
}

void save_with_log(const fs::path& dir, const std::string& name, Model& model,
                   const PhaseStats& stats, int epoch) {
  fs::create_directories(dir);
  save_checkpoint((dir / name).string(), model, {epoch, 0});
  const std::string base = name.substr(0, name.find_last_of('.'));
  stats.save((dir / (base + "_log.json")).string());
  std::printf("wrote %s\n", (dir / name).c_str());
}

int cmd_gen_data(const Common& c) {
  const auto cfg = load_cfg(c);
  fs::create_directories(c.out);
  auto train = generate_dataset(cfg, cfg.data.n_scenes, cfg.data.seed);
  write_dataset(train, (fs::path(c.out) / "train.bin").string());
  auto eval = generate_dataset(cfg, cfg.data.n_eval_scenes,
                               derive_seed(cfg.data.seed, 0xe7a1));
  write_dataset(eval, (fs::path(c.out) / "eval.bin").string());
  std::printf("wrote %zu train / %zu eval scenes under %s\n", train.size(),
              eval.size(), c.out.c_str());
  return 0;
}

int cmd_train_baseline(const Common& c, const std::string& dataset) {
  const auto cfg = load_cfg(c);
  const auto ds = read_dataset(dataset);
  Model model(cfg, cfg.train.seed);
  const auto stats = run_baseline_phase(model, ds);
  save_with_log(c.out, ckpt::kBaseline, model, stats, cfg.train.baseline_epochs);
  return 0;
}

struct MvrFlags {
  std::string variant = "local";
  bool pe_off = false;
  std::optional<double> ratio;
  std::string name;
};

void apply_mvr_flags(Model& model, const MvrFlags& f) {
  auto& cfg = model.mutable_config();
  cfg.mvr.variant = f.variant == "global" ? MvrVariant::Global : MvrVariant::Local;
  cfg.mvr.pe_enabled = !f.pe_off;
  if (f.ratio) cfg.mvr.mask_ratio = *f.ratio;
  model.sync_mvr_config();
}

std::string default_name(const MvrFlags& f, bool pretrain_phase) {
  if (!f.name.empty()) return f.name;
  if (f.pe_off) return pretrain_phase ? ckpt::kPretrainNoPe : ckpt::kMbevNoPe;
  if (f.ratio && std::abs(*f.ratio - 0.76) > 1e-9) {
    MBEV_CHECK(!pretrain_phase, Err::BadConfig,
               "name ratio checkpoints explicitly with --name");
    return ckpt::ratio_name(*f.ratio);
  }
  if (f.variant == "global")
    return pretrain_phase ? ckpt::kPretrainGlobal : ckpt::kMbevGlobal;
  return pretrain_phase ? ckpt::kPretrainLocal : ckpt::kMbevLocal;
}

int cmd_pretrain(const Common& c, const std::string& dataset,
                 const std::string& from, const MvrFlags& flags) {
  const auto ds = read_dataset(dataset);
  Model model = load_model(from, c.seed);
  apply_mvr_flags(model, flags);
  const auto stats = run_pretrain_phase(model, ds);
  save_with_log(c.out, default_name(flags, true), model, stats,
                model.config().train.pretrain_epochs);
  return 0;
}

int cmd_finetune(const Common& c, const std::string& dataset,
                 const std::string& from, const MvrFlags& flags, bool no_mvr) {
  const auto ds = read_dataset(dataset);
  Model model = load_model(from, c.seed);
  apply_mvr_flags(model, flags);
  const auto stats = run_finetune_phase(model, ds, !no_mvr);
  const std::string name = no_mvr && flags.name.empty() ? ckpt::kMbevNoMvr
                                                        : default_name(flags, false);
  save_with_log(c.out, name, model, stats, model.config().train.finetune_epochs);
  return 0;
}

int cmd_eval(const Common& c, const std::string& dataset, const std::string& from,
             int k, bool no_mvr, bool export_preds) {
  const auto ds = read_dataset(dataset);
  Model model = load_model(from, c.seed);
  Evaluator ev(model, ds);
  const auto patterns = enumerate_patterns(k);
  const auto rep = ev.eval_condition("missing_k" + std::to_string(k), patterns,
                                     !no_mvr);
  fs::create_directories(c.out);
  nlohmann::json j;
  j["condition"] = rep.label;
  j["n_patterns"] = patterns.size();
  j["use_mvr"] = !no_mvr;
  j["mAP"] = rep.mean.mAP;
  j["NDS_like"] = rep.mean.nds_like;
  j["mATE"] = rep.mean.mATE;
  j["mASE"] = rep.mean.mASE;
  j["mAOE"] = rep.mean.mAOE;
  j["per_class_AP"] = rep.mean.per_class_ap;
  std::ofstream out((fs::path(c.out) / "eval.json").string());
  out << j.dump(1) << "\n";
  std::printf("k=%d use_mvr=%d mAP=%.4f NDS_like=%.4f\n", k, int(!no_mvr),
              rep.mean.mAP, rep.mean.nds_like);

  if (export_preds) {
    std::vector<std::vector<WorldDetection>> preds;
    MaskPattern none;
    for (size_t s = 0; s < ds.size(); ++s)
      preds.push_back(decode_detections(ev.detect_pattern(int(s), none, !no_mvr),
                                        model.config().box_norm()));
    export_predictions((fs::path(c.out) / "predictions.json").string(), preds);
  }
  return 0;
}

int cmd_grid(const Common& c, const std::string& dataset, const std::string& models,
             const std::string& ratios) {
  GridRequest req;
  if (!ratios.empty()) {
    std::stringstream ss(ratios);
    std::string tok;
    while (std::getline(ss, tok, ',')) req.ratio_sweep.push_back(std::stod(tok));
  }
  run_grid(req, models, dataset, c.out);
  std::printf("grid reports written under %s\n", c.out.c_str());
  return 0;
}

int cmd_flops(const Common& c) {
  const auto cfg = load_cfg(c);
  MaskPattern none, one;
  one.masked[0] = true;
  nlohmann::json j;
  auto put = [&](const char* key, MvrVariant v, const MaskPattern& p) {
    ExperimentConfig cc = cfg;
    cc.mvr.variant = v;
    const auto f = flop_count(cc, p);
    j[key] = {{"encoder", f.encoder}, {"pe3d", f.pe3d},
              {"detection", f.detection}, {"mvr", f.mvr},
              {"total", f.total()}, {"mvr_fraction", f.mvr_fraction()}};
  };
  put("no_missing", MvrVariant::Local, none);
  put("local_1_missing", MvrVariant::Local, one);
  put("global_1_missing", MvrVariant::Global, one);
  fs::create_directories(c.out);
  std::ofstream out((fs::path(c.out) / "flops.json").string());
  out << j.dump(1) << "\n";
  std::printf("%s\n", j.dump(1).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked multi-view reconstruction pipeline"};
  app.require_subcommand(1);

  Common c_gen, c_base, c_pre, c_fine, c_eval, c_grid, c_flops;
  std::string ds_base, ds_pre, ds_fine, ds_eval, ds_grid;
  std::string from_pre, from_fine, from_eval;
  std::string models_dir, ratios;
  MvrFlags flags_pre, flags_fine;
  bool no_mvr_fine = false, no_mvr_eval = false, export_preds = false;
  int eval_k = 1;

  auto* gen = app.add_subcommand("gen-data", "generate train/eval datasets");
  add_common(gen, c_gen);

  auto* base = app.add_subcommand("train-baseline", "detection-only training");
  add_common(base, c_base);
  base->add_option("--dataset", ds_base, "training dataset")->required();

  auto* pre = app.add_subcommand("pretrain", "reconstruction pretraining");
  add_common(pre, c_pre, false);
  pre->add_option("--dataset", ds_pre)->required();
  pre->add_option("--ckpt", from_pre, "starting checkpoint")->required();
  pre->add_option("--variant", flags_pre.variant)->check(CLI::IsMember({"local", "global"}));
  pre->add_flag("--pe-off", flags_pre.pe_off, "disable decoder positional input");
  pre->add_option("--ratio", flags_pre.ratio, "masking ratio override");
  pre->add_option("--name", flags_pre.name, "output checkpoint name");

  auto* fine = app.add_subcommand("finetune", "joint detection + reconstruction");
  add_common(fine, c_fine, false);
  fine->add_option("--dataset", ds_fine)->required();
  fine->add_option("--ckpt", from_fine)->required();
  fine->add_option("--variant", flags_fine.variant)->check(CLI::IsMember({"local", "global"}));
  fine->add_flag("--pe-off", flags_fine.pe_off);
  fine->add_option("--ratio", flags_fine.ratio);
  fine->add_option("--name", flags_fine.name);
  fine->add_flag("--no-mvr", no_mvr_fine, "mask-token fill instead of reconstruction");

  auto* ev = app.add_subcommand("eval", "evaluate one checkpoint");
  add_common(ev, c_eval, false);
  ev->add_option("--dataset", ds_eval)->required();
  ev->add_option("--ckpt", from_eval)->required();
  ev->add_option("--k", eval_k, "missing view count (patterns averaged)");
  ev->add_flag("--no-mvr", no_mvr_eval);
  ev->add_flag("--export-predictions", export_preds);

  auto* grid = app.add_subcommand("grid", "full experiment grid over checkpoints");
  add_common(grid, c_grid, false);
  grid->add_option("--dataset", ds_grid)->required();
  grid->add_option("--models", models_dir, "checkpoint directory")->required();
  grid->add_option("--ratios", ratios, "comma list for the ratio sweep");

  auto* fl = app.add_subcommand("flops", "analytic compute table");
  add_common(fl, c_flops);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(c_gen);
    if (base->parsed()) return cmd_train_baseline(c_base, ds_base);
    if (pre->parsed()) return cmd_pretrain(c_pre, ds_pre, from_pre, flags_pre);
    if (fine->parsed())
      return cmd_finetune(c_fine, ds_fine, from_fine, flags_fine, no_mvr_fine);
    if (ev->parsed())
      return cmd_eval(c_eval, ds_eval, from_eval, eval_k, no_mvr_eval, export_preds);
    if (grid->parsed()) return cmd_grid(c_grid, ds_grid, models_dir, ratios);
    if (fl->parsed()) return cmd_flops(c_flops);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
