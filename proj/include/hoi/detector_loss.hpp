#pragma once

#include <vector>

#include "hoi/detector.hpp"
#include "hoi/hungarian.hpp"
#include "hoi/taxonomy.hpp"
#include "hoi/tensor.hpp"

namespace hoi {

struct MatchWeights {
  double cls = 1.0;
  double box = 2.5;
  double giou = 1.0;
};

enum class ActionLoss { Focal, Softmax };

struct DetectorLossConfig {
  double lambda_box = 2.5;         // lambda_b
  double lambda_giou = 1.0;        // lambda_u
  double lambda_cls_object = 1.0;  // lambda_c for the object head
  double lambda_cls_action = 1.0;  // lambda_c for the verb/HOI heads
  double eos_coef = 0.1;           // background weight in the object loss
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  ActionLoss action_loss = ActionLoss::Focal;
};

/// Scalar values of every objective for one step; fields not computed stay 0.
struct LossReport {
  double l_box = 0, l_iou = 0, l_cls_object = 0, l_cls_action = 0, l_detector = 0;
  double l_con = 0, l_cal = 0, l_merge = 0, l_split = 0, l_all = 0;

  LossReport& operator+=(const LossReport& o);
  LossReport scaled(double s) const;
};

struct DetectorLoss {
  Tensor l_box;         // human + object L1, each averaged over matched pairs
  Tensor l_iou;         // human + object (1 - GIoU), same normalisation
  Tensor l_cls_object;
  Tensor l_cls_action;  // HOI + verb terms
  Tensor total;
};

/// cost[i][j] = -cls * (p_obj(o_j) + p_hoi(c_j)) / 2
///              + box * (|bh_i - bh_j|_1 + |bo_i - bo_j|_1)
///              + giou * ((1 - GIoU_h) + (1 - GIoU_o)).
/// Object-box terms are dropped for ground truth without an object box.
CostMatrix match_cost(const DetectorOutput& pred, const Taxonomy& tax, const std::vector<HoiTriplet>& gt,
                      const MatchWeights& w);

/// Sum over rows of 1 - GIoU(pred_i, target_i); rows are (cx, cy, w, h).
Tensor giou_loss(const Tensor& pred, const Tensor& target);
/// Sum of |pred - target|.
Tensor l1_box_loss(const Tensor& pred, const Tensor& target);

/// Sigmoid focal loss summed over all entries; targets are 0/1.
Tensor focal_loss(const Tensor& logits, const std::vector<double>& targets, double alpha, double gamma);

DetectorLoss detector_loss(const DetectorOutput& pred, const Taxonomy& tax, const std::vector<HoiTriplet>& gt,
                           const MatchResult& match, const DetectorLossConfig& cfg);

Tensor boxes_tensor(const std::vector<Box>& boxes);

}  // namespace hoi
