#include "hoi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "hoi/c2c.hpp"
#include "hoi/checkpoint.hpp"
#include "hoi/errors.hpp"
#include "hoi/hungarian.hpp"
#include "hoi/ops.hpp"
#include "hoi/optim.hpp"
#include "hoi/rng.hpp"

namespace hoi {
namespace {

std::uint64_t derived_seed(std::uint64_t root, std::string_view name) { return substream(root, name)(); }

Box box_row(const Tensor& t, std::size_t i) {
  const auto d = t.data();
  return {d[4 * i], d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]};
}

Tensor zero() { return Tensor::scalar(0.0); }

}  // namespace

DatasetConfig dataset_config(const RunConfig& cfg) {
  DatasetConfig d = cfg.data;
  d.grid.dim = cfg.model.dim;
  d.seed = derived_seed(cfg.seed, "data");
  return d;
}

DetectorConfig model_config(const RunConfig& cfg) {
  DetectorConfig m = cfg.model;
  m.grid_h = cfg.data.grid.height;
  m.grid_w = cfg.data.grid.width;
  m.num_superclasses = cfg.m1 * cfg.m2;
  return m;
}

EmbeddingTable load_embeddings(const RunConfig& cfg, const Taxonomy& tax) {
  if (cfg.embeddings == "pseudo") {
    PseudoEmbeddingConfig p = cfg.pseudo;
    p.dim = cfg.model.dim;
    return EmbeddingTable::pseudo(tax, p);
  }
  EmbeddingTable t = EmbeddingTable::load(cfg.embeddings, tax);
  if (t.dim() != cfg.model.dim)
    throw ConfigError("embedding width " + std::to_string(t.dim()) + " differs from dim " + std::to_string(cfg.model.dim));
  return t;
}

TrainingContext make_context(const Taxonomy& tax, const RunConfig& cfg, const Dataset& data) {
  EmbeddingTable emb = load_embeddings(cfg, tax);
  SuperclassMap supers = build_superclasses(tax, emb, cfg.m1, cfg.m2, derived_seed(cfg.seed, "superclasses"));
  return {&tax, std::move(emb), std::move(supers), category_counts(tax, data.train)};
}

std::unique_ptr<Detector> make_detector(const TrainingContext& ctx, const RunConfig& cfg) {
  return std::make_unique<Detector>(*ctx.tax, ctx.embeddings, model_config(cfg), derived_seed(cfg.seed, "init"));
}

ForwardOptions forward_options(const RunConfig& cfg) {
  ForwardOptions o;
  o.hor_mask = cfg.toggles.hor_mask;
  o.category_tokens = cfg.toggles.split;
  o.k1 = cfg.k1;
  o.k2 = cfg.k2;
  return o;
}

LossReport StepLosses::report() const {
  LossReport r;
  r.l_box = detector.l_box.item();
  r.l_iou = detector.l_iou.item();
  r.l_cls_object = detector.l_cls_object.item();
  r.l_cls_action = detector.l_cls_action.item();
  r.l_detector = detector.total.item();
  r.l_con = con.item();
  r.l_cal = cal.item();
  r.l_merge = merge.item();
  r.l_split = split.item();
  r.l_all = total.item();
  return r;
}

Tensor total_loss(const Tensor& detector, const Tensor& con, const Tensor& cal, const Tensor& merge,
                  const Tensor& split, const LambdaWeights& w, const ObjectiveToggles& on) {
  using ops::add;
  using ops::scale;
  Tensor t = scale(detector, w.detector);
  if (on.con) t = add(t, scale(con, w.con));
  if (on.cal) t = add(t, scale(cal, w.cal));
  if (on.merge) t = add(t, scale(merge, w.merge));
  if (on.split) t = add(t, scale(split, w.split));
  return t;
}

StepLosses compute_losses(const Detector& det, const TrainingContext& ctx, const RunConfig& cfg,
                          const SceneAnnotation& scene, std::mt19937_64& rng) {
  using namespace ops;
  const Taxonomy& tax = *ctx.tax;
  const auto& gt = scene.triplets;
  const auto& on = cfg.toggles;
  const DetectorConfig& mc = det.config();

  const DetectorOutput out = det.forward(scene.feature_grid, forward_options(cfg));
  const MatchResult match = hungarian(match_cost(out, tax, gt, cfg.match));

  StepLosses L;
  L.detector = detector_loss(out, tax, gt, match, cfg.det_loss);
  L.con = L.cal = L.merge = L.split = zero();
  L.matched = match.pairs.size();

  std::vector<std::size_t> q_idx, g_idx, cats;
  for (auto [q, g] : match.pairs) {
    q_idx.push_back(q);
    g_idx.push_back(g);
    cats.push_back(*tax.category(gt[g].verb_class, gt[g].object_class));
  }
  const bool any = !q_idx.empty();

  if (any && (on.con || on.cal)) {
    const SiblingSets sets = build_sibling_sets(gt);
    const Tensor gt_feats = gt_triplet_features(det, tax, gt);
    if (on.con) {
      // predicted boxes are detached: the contrastive term shapes features, not localisation
      const Tensor sh = det.spatial_human(gather_rows(out.instance.human_boxes.detach(), q_idx));
      const Tensor so = det.spatial_object(gather_rows(out.instance.object_boxes.detach(), q_idx));
      const Tensor qf = triplet_features(gather_rows(out.interaction.semantic, q_idx), sh, so);
      L.con = contrastive_loss(qf, gt_feats, g_idx, sets, cfg.tau_con);
    }
    if (on.cal) {
      std::vector<Tensor> add_rows;
      std::vector<std::size_t> targets;
      std::vector<double> add_masks;
      for (std::size_t g : g_idx) {
        if (sets.negatives[g].empty()) continue;
        add_rows.push_back(build_replaced_query(g, sets, tax, gt, det.text_features(), gt_feats, rng).feature);
        targets.push_back(g);
        if (on.hor_mask) {
          const auto m = hor_mask(gt[g].human, gt[g].object, mc.grid_h, mc.grid_w);
          add_masks.insert(add_masks.end(), m.begin(), m.end());
        }
      }
      if (!add_rows.empty()) {
        InteractionInputs in;
        in.queries = out.initial_queries;
        in.masks = out.masks;
        if (!out.category_tokens.empty()) in.category_feats = gather_rows(det.text_features(), out.category_tokens);
        in.additional = concat_rows(add_rows);
        in.additional_masks = std::move(add_masks);
        const InteractionOutput io = det.interaction_decode(in, out.memory);
        L.cal = calibration_loss(*io.corrected, gather_rows(gt_feats, targets).detach(), double(q_idx.size()),
                                 cfg.negated_cal_sign);
      }
    }
  }
  if (any && on.merge) {
    std::vector<std::size_t> labels;
    for (auto c : cats) labels.push_back(ctx.superclasses.hoi_super[c]);
    L.merge = merge_loss(gather_rows(out.interaction.superclass_logits, q_idx), labels);
  }
  if (any && on.split && !out.category_tokens.empty()) {
    const SplitContext sc = split_context(out.category_tokens, det.text_features(), cats);
    if (!sc.eligible.empty()) {
      std::vector<std::size_t> rows;
      for (auto e : sc.eligible) rows.push_back(q_idx[e]);
      L.split = split_loss(gather_rows(out.interaction.semantic, rows), sc.features, sc.targets, cfg.tau_split);
    }
  }
  L.total = total_loss(L.detector.total, L.con, L.cal, L.merge, L.split, cfg.lambda, on);
  return L;
}

std::vector<PredictionRecord> predict(Detector& det, const Taxonomy& tax, const SceneAnnotation& scene,
                                      const ForwardOptions& opt, std::size_t top_k) {
  det.bind(nullptr);
  const DetectorOutput out = det.forward(scene.feature_grid, opt);
  det.unbind();
  const Tensor p_obj = ops::softmax(out.instance.object_logits, 1);
  const auto& hoi = out.interaction.hoi_logits;
  const std::size_t nq = hoi.dim(0), nc = hoi.dim(1), no = p_obj.dim(1);
  const std::size_t k = std::min(top_k, nc);

  std::vector<PredictionRecord> preds;
  std::vector<double> score(nc);
  std::vector<std::size_t> order(nc);
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t c = 0; c < nc; ++c) {
      const double s = 1.0 / (1.0 + std::exp(-hoi[i * nc + c]));
      score[c] = p_obj[i * no + tax.pair(c).object] * s;
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::size_t a, std::size_t b) { return score[a] > score[b] || (score[a] == score[b] && a < b); });
    const Box h = box_row(out.instance.human_boxes, i), o = box_row(out.instance.object_boxes, i);
    for (std::size_t r = 0; r < k; ++r) {
      const auto& p = tax.pair(order[r]);
      preds.push_back({scene.scene_id, h, tax.verb(p.verb).objectless ? kEmptyBox : o, p.object, p.verb, score[order[r]]});
    }
  }
  return preds;
}

std::vector<PredictionRecord> predict_all(Detector& det, const Taxonomy& tax, const std::vector<SceneAnnotation>& scenes,
                                          const ForwardOptions& opt, std::size_t top_k) {
  std::vector<PredictionRecord> all;
  for (const auto& s : scenes) {
    auto p = predict(det, tax, s, opt, top_k);
    all.insert(all.end(), p.begin(), p.end());
  }
  return all;
}

BiasReport diagnose(Detector& det, const TrainingContext& ctx, const RunConfig& cfg,
                    const std::vector<SceneAnnotation>& test, const Tensor& rows_at_init, const EvalReport& final_eval) {
  BiasReport b;
  // one prediction per query: an instance is missed when no query claims it
  const auto top1 = predict_all(det, *ctx.tax, test, forward_options(cfg), 1);
  b.input = diagnose_input_bias(*ctx.tax, top1, test);
  b.output = diagnose_output_bias(rows_at_init, final_eval.per_category_ap, ctx.train_counts);
  return b;
}

namespace {

EvalReport evaluate_model(Detector& det, const TrainingContext& ctx, const RunConfig& cfg,
                          const std::vector<SceneAnnotation>& scenes) {
  const auto preds = predict_all(det, *ctx.tax, scenes, forward_options(cfg), cfg.eval_top_k);
  return evaluate(*ctx.tax, preds, scenes, ctx.train_counts);
}

nlohmann::json report_json(const LossReport& r) {
  return {{"l_box", r.l_box}, {"l_iou", r.l_iou}, {"l_cls_object", r.l_cls_object}, {"l_cls_action", r.l_cls_action},
          {"l_detector", r.l_detector}, {"l_con", r.l_con}, {"l_cal", r.l_cal}, {"l_merge", r.l_merge},
          {"l_split", r.l_split}, {"l_all", r.l_all}};
}

[[noreturn]] void abort_run(const TrainOptions& opt, const RunConfig& cfg, std::size_t epoch,
                            const std::vector<std::uint64_t>& batch, const SceneAnnotation& scene, const LossReport& r,
                            const std::string& reason = "non-finite loss") {
  std::string where = "epoch " + std::to_string(epoch) + ", scene " + std::to_string(scene.scene_id);
  if (opt.out_dir) {
    nlohmann::json dump = {{"config_hash", cfg.hash()}, {"epoch", epoch}, {"batch_scene_ids", batch},
                           {"scene_id", scene.scene_id}, {"reason", reason}, {"losses", report_json(r)}};
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& t : scene.triplets)
      ts.push_back({{"human", t.human.values()}, {"object", t.object.values()}, {"object_class", t.object_class},
                    {"verb_class", t.verb_class}});
    dump["triplets"] = ts;
    std::filesystem::create_directories(*opt.out_dir);
    const auto path = *opt.out_dir / "nan_dump.json";
    std::ofstream(path) << dump.dump(2) << "\n";
    where += " (dump: " + path.string() + ")";
  }
  throw TrainingAborted(reason + " at " + where);
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Taxonomy& tax, const Dataset& data, const TrainOptions& opt) {
  cfg.validate();
  const TrainingContext ctx = make_context(tax, cfg, data);
  TrainResult res;
  res.model = make_detector(ctx, cfg);
  Detector& det = *res.model;
  RunRecord& rec = res.record;
  rec.config_hash = cfg.hash();
  rec.seed = cfg.seed;
  rec.toggles = cfg.toggles;

  const Tensor rows_at_init = det.hoi_classifier();
  Optimizer optim(det.parameter_ptrs(), cfg.optim);
  rec.initial_eval = evaluate_model(det, ctx, cfg, data.test);

  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * (epoch >= cfg.lr_decay_epoch ? cfg.lr_decay_factor : 1.0);
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = substream(cfg.seed, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossReport sum;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<std::uint64_t> batch_ids;
      for (std::size_t b = start; b < end; ++b) batch_ids.push_back(data.train[order[b]].scene_id);
      for (std::size_t b = start; b < end; ++b) {
        const SceneAnnotation& scene = data.train[order[b]];
        auto rng = substream(cfg.seed, "c2c-sample", epoch * n + b);
        Tape tape;
        det.bind(&tape);
        std::optional<StepLosses> step;
        try {
          step = compute_losses(det, ctx, cfg, scene, rng);
        } catch (const DataError& e) {
          // diverged parameters surface first as non-finite matching costs
          det.unbind();
          LossReport nan;
          nan.l_all = std::numeric_limits<double>::quiet_NaN();
          abort_run(opt, cfg, epoch, batch_ids, scene, nan, e.what());
        }
        const StepLosses& L = *step;
        const LossReport r = L.report();
        if (!std::isfinite(r.l_all)) {
          det.unbind();
          abort_run(opt, cfg, epoch, batch_ids, scene, r);
        }
        tape.backward(ops::scale(L.total, 1.0 / double(end - start)));
        det.unbind();
        sum += r;
      }
      optim.step(lr);
    }
    rec.lr.push_back(lr);
    rec.losses.push_back(sum.scaled(n ? 1.0 / double(n) : 0.0));
    rec.evals.push_back(evaluate_model(det, ctx, cfg, data.test));
    if (opt.on_epoch) opt.on_epoch(epoch, rec.losses.back(), rec.evals.back());
  }

  rec.bias = diagnose(det, ctx, cfg, data.test, rows_at_init, rec.evals.empty() ? rec.initial_eval : rec.evals.back());
  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    const auto path = *opt.out_dir / "model.ckpt";
    save_checkpoint(path, det, rec.config_hash);
    rec.checkpoint = path.string();
  }
  return res;
}

std::vector<AblationRow> incremental_grid() {
  std::vector<AblationRow> rows;
  ObjectiveToggles t;
  rows.push_back({"baseline", t});
  t.hor_mask = true;
  rows.push_back({"+hor_mask", t});
  t.con = true;
  rows.push_back({"+contrastive", t});
  t.cal = true;
  rows.push_back({"+calibration", t});
  t.merge = true;
  rows.push_back({"+merge", t});
  t.split = true;
  rows.push_back({"+split", t});
  return rows;
}

std::vector<AblationRun> ablate(const RunConfig& cfg, const Taxonomy& tax, const std::vector<AblationRow>& grid,
                                const std::vector<std::uint64_t>& seeds, const TrainOptions& opt) {
  if (grid.empty()) throw ConfigError("ablation grid is empty");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  std::vector<AblationRun> runs;
  for (auto seed : seeds) {
    RunConfig base = cfg;
    base.seed = seed;
    const Dataset data = generate_dataset(tax, dataset_config(base));
    for (const auto& row : grid) {
      RunConfig rc = base;
      rc.toggles = row.toggles;
      TrainOptions o = opt;
      if (opt.out_dir) o.out_dir = *opt.out_dir / ("seed" + std::to_string(seed)) / row.name;
      runs.push_back({row.name, seed, train(rc, tax, data, o).record});
    }
  }
  return runs;
}

}  // namespace hoi
