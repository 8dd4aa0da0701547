// SPDX-License-Identifier: Apache-2.0
#include "mbev/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mbev/nn/adamw.hpp"

namespace mbev {

namespace {

using G = nn::Graph<float>;
using Val = G::Val;

enum PhaseTag : uint64_t { kBaseline = 1, kPretrain = 2, kFinetune = 3 };

void zero_all_grads(Model& model) {
  for (auto* p : model.parameters()) p->zero_grad();
}

std::vector<nn::ParamTensor<float>*> phase_params(Model& model, PhaseTag tag,
                                                  bool use_mvr) {
  std::vector<nn::ParamTensor<float>*> out;
  switch (tag) {
    case kBaseline:
      model.encoder().collect(out);
      model.pe3d().collect(out);
      model.time_pe().collect(out);
      model.det().collect(out);
      break;
    case kPretrain:
      model.pe3d().collect(out);
      model.time_pe().collect(out);
      model.mvr().collect(out);
      break;
    case kFinetune:
      model.encoder().collect(out);
      model.pe3d().collect(out);
      model.time_pe().collect(out);
      if (use_mvr) model.mvr().collect(out);
      model.det().collect(out);
      break;
  }
  return out;
}

// Detection loss for one scene given its (possibly substituted) grid.
Val scene_det_loss(G& g, Model& model, const FeatureGridVal<float>& grid,
                   const std::array<Val, kViews>& pe,
                   const std::vector<GtTarget>& targets) {
  auto out = model.detect(g, grid, pe);
  const auto det = model.extract_detections(g, out);
  Assignment assign;
  if (!targets.empty()) {
    const auto cost = matching_cost(det, targets, model.config().det.lambda_cls,
                                    model.config().det.lambda_box);
    assign = hungarian_match(cost, model.config().det.num_queries,
                             int(targets.size()));
  }
  return det_loss(g, out, targets, assign, model.config().det);
}

// Reconstruction graph for one scene/pattern; nullopt when nothing is masked.
struct ReconOut {
  ReconstructedFeatures<float> recon;
  Val loss{};
};
std::optional<ReconOut> scene_recon(G& g, Model& model,
                                    const FeatureGridVal<float>& grid,
                                    const MaskPattern& pattern,
                                    const std::array<Val, kViews>* pe_nodes) {
  if (pattern.empty()) return std::nullopt;
  auto& mvr = model.mvr();
  ReconOut out;
  if (mvr.config().variant == MvrVariant::Local) {
    for (int view : pattern.masked_views()) {
      auto seq = mvr.assemble_local(g, grid, pattern, view, model.rig(),
                                    &model.time_pe());
      auto rec = mvr.decode(g, seq);
      out.recon.entries.push_back(rec.entries[0]);
    }
  } else {
    auto seq = mvr.assemble_global(g, grid, pattern, &model.pe3d(),
                                   &model.time_pe(), pe_nodes);
    out.recon = mvr.decode(g, seq);
  }
  out.loss = recon_loss(g, grid, out.recon);
  return out;
}

std::vector<std::vector<GtTarget>> all_targets(const Dataset& ds,
                                               const BoxNorm& norm) {
  std::vector<std::vector<GtTarget>> out;
  out.reserve(ds.size());
  for (const auto& s : ds.scenes) out.push_back(encode_targets(s, norm));
  return out;
}

std::vector<int> epoch_order(Rng& rng, size_t n) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(int(i))]);
  return order;
}

void log_epoch(bool verbose, const char* phase, int epoch, int total,
               double loss, double extra = -1, const char* extra_name = nullptr) {
  if (!verbose) return;
  if (extra_name)
    std::printf("[%s] epoch %d/%d loss %.5f %s %.5f\n", phase, epoch + 1, total,
                loss, extra_name, extra);
  else
    std::printf("[%s] epoch %d/%d loss %.5f\n", phase, epoch + 1, total, loss);
  std::fflush(stdout);
}

}  // namespace

void PhaseStats::save(const std::string& path) const {
  nlohmann::json j;
  j["epoch_total"] = epoch_total;
  j["epoch_det"] = epoch_det;
  j["epoch_recon"] = epoch_recon;
  std::ofstream out(path);
  MBEV_CHECK(out.good(), Err::TruncatedFile, "cannot write " + path);
  out << j.dump(1) << "\n";
}

PhaseStats PhaseStats::load(const std::string& path) {
  std::ifstream in(path);
  MBEV_CHECK(in.good(), Err::TruncatedFile, "cannot read " + path);
  nlohmann::json j;
  in >> j;
  PhaseStats s;
  s.epoch_total = j.at("epoch_total").get<std::vector<double>>();
  s.epoch_det = j.at("epoch_det").get<std::vector<double>>();
  s.epoch_recon = j.at("epoch_recon").get<std::vector<double>>();
  return s;
}

PhaseStats run_baseline_phase(Model& model, const Dataset& ds, bool verbose) {
  const auto& tc = model.config().train;
  model.set_encoder_frozen(false);
  zero_all_grads(model);
  const auto targets = all_targets(ds, model.config().box_norm());
  const int steps_per_epoch = int((ds.size() + tc.batch - 1) / tc.batch);

  nn::AdamW<float>::Options opt;
  opt.lr = tc.lr_baseline;
  opt.weight_decay = tc.weight_decay;
  opt.total_steps = tc.baseline_epochs * steps_per_epoch;
  nn::AdamW<float> adam(phase_params(model, kBaseline, true), opt);

  Rng rng(derive_seed(tc.seed, kBaseline));
  PhaseStats stats;
  for (int epoch = 0; epoch < tc.baseline_epochs; ++epoch) {
    const auto order = epoch_order(rng, ds.size());
    double epoch_loss = 0;
    int batches = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += tc.batch) {
      G g;
      const auto pe = model.pe3d_nodes(g);
      std::vector<Val> losses;
      for (size_t i = b0; i < std::min(order.size(), b0 + tc.batch); ++i) {
        const int s = order[i];
        auto grid = model.encode_scene(g, ds.frames[s]);
        losses.push_back(scene_det_loss(g, model, grid, pe, targets[s]));
      }
      const Val total = g.scale(g.add_many(losses), 1.f / float(losses.size()));
      g.backward(total);
      adam.step();
      epoch_loss += g.scalar(total);
      ++batches;
    }
    epoch_loss /= batches;
    stats.epoch_total.push_back(epoch_loss);
    stats.epoch_det.push_back(epoch_loss);
    log_epoch(verbose, "baseline", epoch, tc.baseline_epochs, epoch_loss);
  }
  return stats;
}

PhaseStats run_pretrain_phase(Model& model, const Dataset& ds, bool verbose) {
  const auto& tc = model.config().train;
  model.set_encoder_frozen(true);
  zero_all_grads(model);

  // Frozen encoder: features are constants of the data, so encode once.
  std::vector<FeatureGrid> cached;
  cached.reserve(ds.size());
  for (const auto& frame : ds.frames) {
    G g(false);
    cached.push_back(grid_values(g, model.encode_scene(g, frame)));
  }

  const int steps_per_epoch = int((ds.size() + tc.batch - 1) / tc.batch);
  nn::AdamW<float>::Options opt;
  opt.lr = tc.lr_pretrain;
  opt.weight_decay = tc.weight_decay;
  opt.total_steps = tc.pretrain_epochs * steps_per_epoch;
  nn::AdamW<float> adam(phase_params(model, kPretrain, true), opt);

  const MaskSchedule schedule = model.config().schedule(0.0);
  Rng rng(derive_seed(tc.seed, kPretrain));
  PhaseStats stats;
  for (int epoch = 0; epoch < tc.pretrain_epochs; ++epoch) {
    const auto order = epoch_order(rng, ds.size());
    double epoch_loss = 0;
    int batches = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += tc.batch) {
      G g;
      const auto pe = model.pe3d_nodes(g);
      std::vector<Val> losses;
      for (size_t i = b0; i < std::min(order.size(), b0 + tc.batch); ++i) {
        const int s = order[i];
        const auto pattern = sample_mask(rng, schedule, epoch);
        if (pattern.empty()) continue;  // no loss support without masked views
        auto grid = grid_inputs(g, cached[s]);
        auto rec = scene_recon(g, model, grid, pattern, &pe);
        losses.push_back(rec->loss);
      }
      if (losses.empty()) continue;
      const Val total = g.scale(g.add_many(losses), 1.f / float(losses.size()));
      g.backward(total);
      adam.step();
      epoch_loss += g.scalar(total);
      ++batches;
    }
    epoch_loss = batches ? epoch_loss / batches : 0.0;
    stats.epoch_total.push_back(epoch_loss);
    stats.epoch_recon.push_back(epoch_loss);
    log_epoch(verbose, "pretrain", epoch, tc.pretrain_epochs, epoch_loss);
  }
  model.set_encoder_frozen(false);
  return stats;
}

PhaseStats run_finetune_phase(Model& model, const Dataset& ds, bool use_mvr,
                              bool verbose) {
  const auto& tc = model.config().train;
  model.set_encoder_frozen(false);
  zero_all_grads(model);
  const auto targets = all_targets(ds, model.config().box_norm());

  const int steps_per_epoch = int((ds.size() + tc.batch - 1) / tc.batch);
  nn::AdamW<float>::Options opt;
  opt.lr = tc.lr_finetune;
  opt.weight_decay = tc.weight_decay;
  opt.total_steps = tc.finetune_epochs * steps_per_epoch;
  nn::AdamW<float> adam(phase_params(model, kFinetune, use_mvr), opt);

  const MaskSchedule schedule = model.config().schedule(tc.p_keep_all_finetune);
  const float alpha = float(tc.alpha);
  Rng rng(derive_seed(tc.seed, kFinetune));
  PhaseStats stats;
  for (int epoch = 0; epoch < tc.finetune_epochs; ++epoch) {
    const auto order = epoch_order(rng, ds.size());
    double epoch_loss = 0, epoch_det = 0, epoch_recon = 0;
    int batches = 0, recon_batches = 0;
    for (size_t b0 = 0; b0 < order.size(); b0 += tc.batch) {
      G g;
      const auto pe = model.pe3d_nodes(g);
      std::vector<Val> det_losses, recon_losses;
      for (size_t i = b0; i < std::min(order.size(), b0 + tc.batch); ++i) {
        const int s = order[i];
        const auto pattern = sample_mask(rng, schedule, epoch);
        auto grid = model.encode_scene(g, ds.frames[s]);
        if (pattern.empty()) {
          det_losses.push_back(scene_det_loss(g, model, grid, pe, targets[s]));
          continue;
        }
        if (!use_mvr) {
          auto filled = fill_masked(g, grid, pattern, model.mvr(),
                                    model.config().zeros_fill);
          det_losses.push_back(scene_det_loss(g, model, filled, pe, targets[s]));
          continue;
        }
        auto rec = scene_recon(g, model, grid, pattern, &pe);
        recon_losses.push_back(rec->loss);
        auto substituted = substitute(grid, pattern, rec->recon);
        det_losses.push_back(scene_det_loss(g, model, substituted, pe, targets[s]));
      }
      Val det_total = g.scale(g.add_many(det_losses), 1.f / float(det_losses.size()));
      Val total = det_total;
      if (!recon_losses.empty()) {
        const Val recon_total = g.scale(g.add_many(recon_losses),
                                        1.f / float(recon_losses.size()));
        total = g.lincomb(det_total, recon_total, 1.f, alpha);
        epoch_recon += g.scalar(recon_total);
        ++recon_batches;
      }
      g.backward(total);
      adam.step();
      epoch_loss += g.scalar(total);
      epoch_det += g.scalar(det_total);
      ++batches;
    }
    epoch_loss /= batches;
    epoch_det /= batches;
    stats.epoch_total.push_back(epoch_loss);
    stats.epoch_det.push_back(epoch_det);
    stats.epoch_recon.push_back(recon_batches ? epoch_recon / recon_batches : 0.0);
    log_epoch(verbose, use_mvr ? "finetune" : "finetune-nomvr", epoch,
              tc.finetune_epochs, epoch_loss, stats.epoch_recon.back(), "recon");
  }
  return stats;
}

Evaluator::Evaluator(Model& model, const Dataset& ds) : model_(model), ds_(ds) {
  cached_.reserve(ds.size());
  for (const auto& frame : ds.frames) {
    G g(false);
    cached_.push_back(grid_values(g, model_.encode_scene(g, frame)));
  }
  {
    G g(false);
    for (int v = 0; v < kViews; ++v) pe_vals_[v] = g.val(model_.pe3d().fwd(g, v));
  }
  for (const auto& scene : ds.scenes) {
    std::vector<EvalBox> boxes;
    for (const auto& obj : scene.objects) boxes.push_back(to_eval_box(obj));
    gts_.push_back(std::move(boxes));
  }
}

DetectionSet Evaluator::run_scene(int scene_idx, const MaskPattern& pattern,
                                  bool use_mvr) {
  G g(false);
  auto grid = grid_inputs(g, cached_[scene_idx]);
  std::array<Val, kViews> pe{};
  for (int v = 0; v < kViews; ++v)
    pe[v] = g.input(grid.tokens(), grid.channels, pe_vals_[v]);
  if (!pattern.empty()) {
    if (use_mvr) {
      auto rec = scene_recon(g, model_, grid, pattern, &pe);
      grid = substitute(grid, pattern, rec->recon);
    } else {
      grid = fill_masked(g, grid, pattern, model_.mvr(), model_.config().zeros_fill);
    }
  }
  auto out = model_.detect(g, grid, pe);
  return model_.extract_detections(g, out);
}

DetectionSet Evaluator::detect_plain(int scene_idx) {
  G g(false);
  auto grid = grid_inputs(g, cached_[scene_idx]);
  std::array<Val, kViews> pe{};
  for (int v = 0; v < kViews; ++v)
    pe[v] = g.input(grid.tokens(), grid.channels, pe_vals_[v]);
  auto out = model_.detect(g, grid, pe);
  return model_.extract_detections(g, out);
}

DetectionSet Evaluator::detect_pattern(int scene_idx, const MaskPattern& pattern,
                                       bool use_mvr) {
  return run_scene(scene_idx, pattern, use_mvr);
}

MetricsReport Evaluator::eval_pattern(const MaskPattern& pattern, bool use_mvr) {
  std::vector<std::vector<EvalBox>> preds;
  preds.reserve(ds_.size());
  const BoxNorm norm = model_.config().box_norm();
  for (size_t s = 0; s < ds_.size(); ++s) {
    const auto det = run_scene(int(s), pattern, use_mvr);
    std::vector<EvalBox> boxes;
    for (const auto& d : decode_detections(det, norm)) boxes.push_back(to_eval_box(d));
    preds.push_back(std::move(boxes));
  }
  return compute_metrics(preds, gts_, model_.config().det.num_classes);
}

Evaluator::ConditionReport Evaluator::eval_condition(
    const std::string& label, const std::vector<MaskPattern>& patterns,
    bool use_mvr) {
  ConditionReport rep;
  rep.label = label;
  for (const auto& p : patterns) rep.per_pattern.push_back(eval_pattern(p, use_mvr));
  rep.mean = mean_report(rep.per_pattern);
  return rep;
}

double Evaluator::recon_mse(const std::vector<MaskPattern>& patterns) {
  double sum = 0;
  int n = 0;
  for (const auto& pattern : patterns) {
    if (pattern.empty()) continue;
    for (size_t s = 0; s < ds_.size(); ++s) {
      G g(false);
      auto grid = grid_inputs(g, cached_[s]);
      std::array<Val, kViews> pe{};
      for (int v = 0; v < kViews; ++v)
        pe[v] = g.input(grid.tokens(), grid.channels, pe_vals_[v]);
      auto rec = scene_recon(g, model_, grid, pattern, &pe);
      sum += g.scalar(rec->loss);
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

double Evaluator::fill_mse(const std::vector<MaskPattern>& patterns) {
  const auto& token = model_.mvr().mask_token().v;
  const bool zeros = model_.config().zeros_fill;
  double sum = 0;
  int n = 0;
  for (const auto& pattern : patterns) {
    if (pattern.empty()) continue;
    for (size_t s = 0; s < ds_.size(); ++s) {
      const auto& grid = cached_[s];
      double acc = 0;
      size_t count = 0;
      for (int v = 0; v < kViews; ++v) {
        if (!pattern.masked[v]) continue;
        for (int t = 0; t < kTimesteps; ++t) {
          const auto& slice = grid.slices[slice_index(v, t)];
          for (size_t i = 0; i < slice.size(); ++i) {
            const double fill = zeros ? 0.0 : double(token[i % token.size()]);
            const double d = double(slice[i]) - fill;
            acc += d * d;
          }
          count += slice.size();
        }
      }
      if (count) {
        sum += acc / double(count);
        ++n;
      }
    }
  }
  return n ? sum / n : 0.0;
}

MetricsReport mean_report(const std::vector<MetricsReport>& reports) {
  MetricsReport out;
  if (reports.empty()) return out;
  const size_t nc = reports[0].per_class_ap.size();
  out.per_class_ap.assign(nc, 0.0);
  std::vector<int> class_n(nc, 0);
  for (const auto& r : reports) {
    out.mAP += r.mAP;
    out.mATE += r.mATE;
    out.mASE += r.mASE;
    out.mAOE += r.mAOE;
    out.nds_like += r.nds_like;
    out.tp_count += r.tp_count;
    for (size_t c = 0; c < nc; ++c)
      if (c < r.per_class_ap.size() && r.per_class_ap[c] >= 0) {
        out.per_class_ap[c] += r.per_class_ap[c];
        ++class_n[c];
      }
  }
  const double n = double(reports.size());
  out.mAP /= n;
  out.mATE /= n;
  out.mASE /= n;
  out.mAOE /= n;
  out.nds_like /= n;
  for (size_t c = 0; c < nc; ++c)
    out.per_class_ap[c] = class_n[c] ? out.per_class_ap[c] / class_n[c] : -1.0;
  return out;
}

}  // namespace mbev
