#include "hoi/c2c.hpp"

#include "hoi/detector_loss.hpp"
#include "hoi/errors.hpp"
#include "hoi/ops.hpp"

namespace hoi {

SiblingSets build_sibling_sets(const std::vector<HoiTriplet>& ts) {
  SiblingSets s;
  s.positives.resize(ts.size());
  s.negatives.resize(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i)
    for (std::size_t j = 0; j < ts.size(); ++j) {
      const bool same_o = ts[i].object_class == ts[j].object_class;
      const bool same_v = ts[i].verb_class == ts[j].verb_class;
      if (same_o && same_v) s.positives[i].push_back(j);
      else if (same_o != same_v) s.negatives[i].push_back(j);
    }
  return s;
}

Tensor triplet_features(const Tensor& semantic, const Tensor& spatial_h, const Tensor& spatial_o) {
  const Tensor parts[] = {semantic, spatial_h, spatial_o};
  return ops::concat_last(parts);
}

Tensor gt_triplet_features(const Detector& det, const Taxonomy& tax, const std::vector<HoiTriplet>& ts) {
  std::vector<std::size_t> cats;
  std::vector<Box> hb, ob;
  for (const auto& t : ts) {
    cats.push_back(*tax.category(t.verb_class, t.object_class));
    hb.push_back(t.human);
    ob.push_back(t.object);
  }
  return triplet_features(ops::gather_rows(det.text_features(), cats), det.spatial_human(boxes_tensor(hb)),
                          det.spatial_object(boxes_tensor(ob)));
}

Tensor contrastive_loss(const Tensor& query_feats, const Tensor& gt_feats, const std::vector<std::size_t>& gt_index,
                        const SiblingSets& sets, double tau) {
  using namespace ops;
  if (!(tau > 0)) throw ConfigError("temperature must be positive");
  if (query_feats.rank() != 2 || query_feats.dim(0) != gt_index.size())
    throw DimensionError("one query feature row per matched ground truth expected");
  const std::size_t n = gt_index.size();
  if (n == 0) return Tensor::scalar(0.0);
  const Tensor q = l2_normalize(query_feats);
  const Tensor g = l2_normalize(gt_feats);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = gt_index[i];
    const auto& P = sets.positives.at(t);
    const auto& N = sets.negatives.at(t);
    if (N.empty()) continue;
    std::vector<std::size_t> E(P);
    E.insert(E.end(), N.begin(), N.end());
    const std::size_t qi[] = {i};
    const Tensor s = scale(matmul(gather_rows(q, qi), transpose(gather_rows(g, E))), 1.0 / tau);  // 1 x |E|
    const Tensor p = reshape(softmax(s, 1), {E.size(), 1});
    std::vector<std::size_t> first(P.size());
    for (std::size_t k = 0; k < P.size(); ++k) first[k] = k;
    total = add(total, log(sum(gather_rows(p, first))));
  }
  return scale(total, -1.0 / double(n));
}

ReplacedQuery build_replaced_query(std::size_t i, const SiblingSets& sets, const Taxonomy& tax,
                                   const std::vector<HoiTriplet>& ts, const Tensor& text, const Tensor& gt_feats,
                                   std::mt19937_64& rng) {
  const auto& N = sets.negatives.at(i);
  if (N.empty()) throw ContractError("replaced query needs a non-empty negative set");
  ReplacedQuery r;
  r.triplet = i;
  r.sampled = N[std::uniform_int_distribution<std::size_t>(0, N.size() - 1)(rng)];
  r.category = *tax.category(ts[r.sampled].verb_class, ts[r.sampled].object_class);
  const std::size_t C = text.dim(1);
  const std::size_t row[] = {i}, cat[] = {r.category};
  const Tensor spatial = ops::slice_cols(ops::gather_rows(gt_feats, row), C, gt_feats.dim(1) - C);
  const Tensor parts[] = {ops::gather_rows(text, cat), spatial};
  r.feature = ops::concat_last(parts);
  return r;
}

Tensor calibration_loss(const Tensor& corrected, const Tensor& targets, double n_norm, bool strict_sign) {
  if (corrected.shape() != targets.shape()) throw DimensionError("calibration feature and target shapes differ");
  if (!(n_norm > 0)) throw ContractError("calibration normaliser must be positive");
  if (corrected.numel() == 0) return Tensor::scalar(0.0);
  return ops::scale(ops::l1_norm(ops::sub(corrected, targets)), (strict_sign ? -1.0 : 1.0) / n_norm);
}

}  // namespace hoi
