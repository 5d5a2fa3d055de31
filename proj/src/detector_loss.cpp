#include "hoi/detector_loss.hpp"

#include <cmath>

#include "hoi/errors.hpp"
#include "hoi/ops.hpp"

namespace hoi {

namespace {

Box box_row(const Tensor& t, std::size_t i) {
  const auto d = t.data();
  return {d[4 * i], d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]};
}

bool has_object(const HoiTriplet& t) { return !t.object.degenerate(); }

}  // namespace

LossReport& LossReport::operator+=(const LossReport& o) {
  l_box += o.l_box;
  l_iou += o.l_iou;
  l_cls_object += o.l_cls_object;
  l_cls_action += o.l_cls_action;
  l_detector += o.l_detector;
  l_con += o.l_con;
  l_cal += o.l_cal;
  l_merge += o.l_merge;
  l_split += o.l_split;
  l_all += o.l_all;
  return *this;
}

LossReport LossReport::scaled(double s) const {
  LossReport r = *this;
  for (double* f : {&r.l_box, &r.l_iou, &r.l_cls_object, &r.l_cls_action, &r.l_detector, &r.l_con, &r.l_cal,
                    &r.l_merge, &r.l_split, &r.l_all})
    *f *= s;
  return r;
}

Tensor boxes_tensor(const std::vector<Box>& boxes) {
  std::vector<double> v;
  v.reserve(boxes.size() * 4);
  for (const auto& b : boxes) v.insert(v.end(), {b.cx, b.cy, b.w, b.h});
  return Tensor({boxes.size(), 4}, std::move(v));
}

CostMatrix match_cost(const DetectorOutput& pred, const Taxonomy& tax, const std::vector<HoiTriplet>& gt,
                      const MatchWeights& w) {
  const auto& inst = pred.instance;
  const std::size_t nq = inst.human_boxes.dim(0), ng = gt.size();
  const Tensor p_obj = ops::softmax(inst.object_logits.detach(), 1);
  const Tensor p_hoi = ops::sigmoid(pred.interaction.hoi_logits.detach());
  std::vector<double> c(nq * ng);
  for (std::size_t i = 0; i < nq; ++i) {
    const Box ph = box_row(inst.human_boxes, i), po = box_row(inst.object_boxes, i);
    for (std::size_t j = 0; j < ng; ++j) {
      const auto& t = gt[j];
      const std::size_t cat = *tax.category(t.verb_class, t.object_class);
      double cost = -w.cls * (p_obj.at(i, t.object_class) + p_hoi.at(i, cat)) / 2;
      cost += w.box * l1_distance(ph, t.human) + w.giou * (1 - giou(ph, t.human));
      if (has_object(t)) cost += w.box * l1_distance(po, t.object) + w.giou * (1 - giou(po, t.object));
      c[i * ng + j] = cost;
    }
  }
  return CostMatrix(nq, ng, std::move(c));
}

Tensor l1_box_loss(const Tensor& pred, const Tensor& target) { return ops::l1_norm(ops::sub(pred, target)); }

Tensor giou_loss(const Tensor& pred, const Tensor& target) {
  using namespace ops;
  if (pred.shape() != target.shape() || pred.rank() != 2 || pred.dim(1) != 4)
    throw DimensionError("giou_loss needs matching n x 4 boxes");
  auto col = [](const Tensor& t, std::size_t i) { return slice_cols(t, i, 1); };
  const Tensor pcx = col(pred, 0), pcy = col(pred, 1), pw = col(pred, 2), ph = col(pred, 3);
  const Tensor tcx = col(target, 0), tcy = col(target, 1), tw = col(target, 2), th = col(target, 3);
  const Tensor px0 = sub(pcx, scale(pw, 0.5)), px1 = add(pcx, scale(pw, 0.5));
  const Tensor py0 = sub(pcy, scale(ph, 0.5)), py1 = add(pcy, scale(ph, 0.5));
  const Tensor tx0 = sub(tcx, scale(tw, 0.5)), tx1 = add(tcx, scale(tw, 0.5));
  const Tensor ty0 = sub(tcy, scale(th, 0.5)), ty1 = add(tcy, scale(th, 0.5));
  const Tensor iw = relu(sub(minimum(px1, tx1), maximum(px0, tx0)));
  const Tensor ih = relu(sub(minimum(py1, ty1), maximum(py0, ty0)));
  const Tensor inter = mul(iw, ih);
  const Tensor uni = sub(add(mul(pw, ph), mul(tw, th)), inter);
  const Tensor hull = mul(sub(maximum(px1, tx1), minimum(px0, tx0)), sub(maximum(py1, ty1), minimum(py0, ty0)));
  const Tensor g = sub(div(inter, uni), div(sub(hull, uni), hull));
  return sum(add_scalar(neg(g), 1.0));
}

Tensor focal_loss(const Tensor& logits, const std::vector<double>& targets, double alpha, double gamma) {
  using namespace ops;
  if (targets.size() != logits.numel()) throw DimensionError("focal_loss target count mismatch");
  std::vector<double> a(targets.size()), b(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    a[i] = alpha * targets[i];
    b[i] = (1 - alpha) * (1 - targets[i]);
  }
  const Tensor A(logits.shape(), std::move(a)), B(logits.shape(), std::move(b));
  const Tensor neg_x = neg(logits);
  const Tensor pos_term = mul(A, mul(pow_scalar(sigmoid(neg_x), gamma), log_sigmoid(logits)));
  const Tensor neg_term = mul(B, mul(pow_scalar(sigmoid(logits), gamma), log_sigmoid(neg_x)));
  return neg(sum(add(pos_term, neg_term)));
}

DetectorLoss detector_loss(const DetectorOutput& pred, const Taxonomy& tax, const std::vector<HoiTriplet>& gt,
                           const MatchResult& match, const DetectorLossConfig& cfg) {
  using namespace ops;
  const auto& inst = pred.instance;
  const auto& act = pred.interaction;
  const std::size_t nq = inst.human_boxes.dim(0);
  const std::size_t n_obj = tax.num_objects();
  const double norm = std::max<double>(1.0, double(match.pairs.size()));

  DetectorLoss out;
  out.l_box = Tensor::scalar(0.0);
  out.l_iou = Tensor::scalar(0.0);
  if (!match.pairs.empty()) {
    std::vector<std::size_t> hq, oq;
    std::vector<Box> hb, ob;
    for (auto [q, g] : match.pairs) {
      hq.push_back(q);
      hb.push_back(gt.at(g).human);
      if (has_object(gt[g])) {
        oq.push_back(q);
        ob.push_back(gt[g].object);
      }
    }
    const Tensor ph = gather_rows(inst.human_boxes, hq), th = boxes_tensor(hb);
    Tensor l1 = l1_box_loss(ph, th), gi = giou_loss(ph, th);
    if (!oq.empty()) {
      const Tensor po = gather_rows(inst.object_boxes, oq), to = boxes_tensor(ob);
      l1 = add(l1, l1_box_loss(po, to));
      gi = add(gi, giou_loss(po, to));
    }
    out.l_box = scale(l1, 1 / norm);
    out.l_iou = scale(gi, 1 / norm);
  }

  // object classification over every query, background for the unmatched
  std::vector<std::size_t> obj_target(nq, n_obj);
  std::vector<double> obj_weight(nq, cfg.eos_coef);
  for (auto [q, g] : match.pairs) {
    obj_target[q] = gt[g].object_class;
    obj_weight[q] = 1.0;
  }
  double wsum = 0;
  for (double x : obj_weight) wsum += x;
  const Tensor picked = pick(log_softmax(inst.object_logits, 1), obj_target);
  out.l_cls_object = scale(sum(mul(picked, Tensor({nq}, obj_weight))), -1.0 / wsum);

  const std::size_t nc = tax.num_categories(), nv = tax.num_verbs();
  if (cfg.action_loss == ActionLoss::Focal) {
    std::vector<double> hoi_t(nq * nc, 0.0), verb_t(nq * nv, 0.0);
    for (auto [q, g] : match.pairs) {
      hoi_t[q * nc + *tax.category(gt[g].verb_class, gt[g].object_class)] = 1.0;
      verb_t[q * nv + gt[g].verb_class] = 1.0;
    }
    const Tensor f = add(focal_loss(act.hoi_logits, hoi_t, cfg.focal_alpha, cfg.focal_gamma),
                         focal_loss(act.verb_logits, verb_t, cfg.focal_alpha, cfg.focal_gamma));
    out.l_cls_action = scale(f, 1 / norm);
  } else if (match.pairs.empty()) {
    out.l_cls_action = Tensor::scalar(0.0);
  } else {
    std::vector<std::size_t> rows, cats, verbs;
    for (auto [q, g] : match.pairs) {
      rows.push_back(q);
      cats.push_back(*tax.category(gt[g].verb_class, gt[g].object_class));
      verbs.push_back(gt[g].verb_class);
    }
    const Tensor h = sum(pick(log_softmax(gather_rows(act.hoi_logits, rows), 1), cats));
    const Tensor v = sum(pick(log_softmax(gather_rows(act.verb_logits, rows), 1), verbs));
    out.l_cls_action = scale(add(h, v), -1 / norm);
  }

  out.total = add(add(scale(out.l_box, cfg.lambda_box), scale(out.l_iou, cfg.lambda_giou)),
                  add(scale(out.l_cls_object, cfg.lambda_cls_object), scale(out.l_cls_action, cfg.lambda_cls_action)));
  return out;
}

}  // namespace hoi
