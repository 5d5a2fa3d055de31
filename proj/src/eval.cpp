#include "hoi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "hoi/errors.hpp"

namespace hoi {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Quality = std::function<std::optional<double>(const PredictionRecord&, const HoiTriplet&)>;

std::unordered_map<std::uint64_t, std::size_t> index_scenes(std::span<const SceneAnnotation> gts,
                                                            std::span<const PredictionRecord> preds) {
  std::unordered_map<std::uint64_t, std::size_t> idx;
  for (std::size_t s = 0; s < gts.size(); ++s)
    if (!idx.emplace(gts[s].scene_id, s).second)
      throw DataError("duplicate scene id " + std::to_string(gts[s].scene_id));
  for (const auto& p : preds)
    if (!idx.count(p.scene_id)) throw DataError("prediction references unknown scene " + std::to_string(p.scene_id));
  return idx;
}

// Descending score; ties by scene id, then by record position.
std::vector<std::size_t> ranked(std::span<const PredictionRecord> preds, std::vector<std::size_t> which) {
  std::stable_sort(which.begin(), which.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    if (preds[a].scene_id != preds[b].scene_id) return preds[a].scene_id < preds[b].scene_id;
    return a < b;
  });
  return which;
}

// Greedy consumption. `gt_of` lists, per scene, the ground-truth indices that
// belong to the group. Returns the ranked TP flags; marks claimed entries in
// `claimed` when given.
std::vector<bool> greedy(std::span<const PredictionRecord> preds, const std::vector<std::size_t>& order,
                         std::span<const SceneAnnotation> gts, const std::unordered_map<std::uint64_t, std::size_t>& idx,
                         const std::vector<std::vector<std::size_t>>& gt_of, const Quality& quality,
                         std::vector<std::vector<bool>>* claimed) {
  std::vector<std::vector<bool>> used(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].triplets.size(), false);
  std::vector<bool> tp;
  tp.reserve(order.size());
  for (auto pi : order) {
    const auto& p = preds[pi];
    const std::size_t s = idx.at(p.scene_id);
    double best = -1;
    std::size_t best_g = 0;
    for (auto g : gt_of[s]) {
      if (used[s][g]) continue;
      const auto q = quality(p, gts[s].triplets[g]);
      if (q && *q > best) {
        best = *q;
        best_g = g;
      }
    }
    if (best >= 0) {
      used[s][best_g] = true;
      if (claimed) (*claimed)[s][best_g] = true;
    }
    tp.push_back(best >= 0);
  }
  return tp;
}

std::optional<double> object_quality(const PredictionRecord& p, const HoiTriplet& g, double thr, bool ignore_empty) {
  const double ih = iou(p.human, g.human);
  if (!(ih > thr)) return std::nullopt;
  if (g.object.degenerate()) {
    if (ignore_empty || p.object.degenerate()) return ih;
    return std::nullopt;
  }
  const double io = iou(p.object, g.object);
  if (!(io > thr)) return std::nullopt;
  return std::min(ih, io);
}

double mean_of(const std::vector<std::optional<double>>& aps, const std::function<bool(std::size_t)>& keep) {
  double s = 0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < aps.size(); ++c)
    if (aps[c] && keep(c)) {
      s += *aps[c];
      ++n;
    }
  return n ? s / double(n) : kNaN;
}

std::vector<std::optional<double>> category_aps(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                                                std::span<const SceneAnnotation> gts,
                                                const std::unordered_map<std::uint64_t, std::size_t>& idx,
                                                EvalSetting setting, double thr, std::vector<std::size_t>* counts) {
  const std::size_t nc = tax.num_categories();
  std::vector<std::vector<std::size_t>> pred_of(nc);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto c = tax.category(preds[i].verb_class, preds[i].object_class);
    if (!c) throw DataError("prediction with an unknown category");
    pred_of[*c].push_back(i);
  }
  std::vector<std::optional<double>> aps(nc);
  if (counts) counts->assign(nc, 0);
  const Quality quality = [thr](const PredictionRecord& p, const HoiTriplet& g) {
    return object_quality(p, g, thr, false);
  };
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& pair = tax.pair(c);
    std::vector<bool> allowed(gts.size(), true);
    if (setting == EvalSetting::KnownObject)
      for (std::size_t s = 0; s < gts.size(); ++s)
        allowed[s] = std::any_of(gts[s].triplets.begin(), gts[s].triplets.end(),
                                 [&](const HoiTriplet& t) { return t.object_class == pair.object; });
    std::vector<std::vector<std::size_t>> gt_of(gts.size());
    std::size_t npos = 0;
    for (std::size_t s = 0; s < gts.size(); ++s) {
      if (!allowed[s]) continue;
      for (std::size_t g = 0; g < gts[s].triplets.size(); ++g) {
        const auto& t = gts[s].triplets[g];
        if (t.verb_class == pair.verb && t.object_class == pair.object) {
          gt_of[s].push_back(g);
          ++npos;
        }
      }
    }
    if (counts) (*counts)[c] = npos;
    if (npos == 0) continue;
    std::vector<std::size_t> mine;
    for (auto i : pred_of[c])
      if (allowed[idx.at(preds[i].scene_id)]) mine.push_back(i);
    const auto tp = greedy(preds, ranked(preds, std::move(mine)), gts, idx, gt_of, quality, nullptr);
    aps[c] = interpolated_ap(tp, npos);
  }
  return aps;
}

}  // namespace

double interpolated_ap(const std::vector<bool>& ranked_tp, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  // best[k]: highest precision reached at recall >= k / 100
  std::vector<double> best(101, 0.0);
  std::size_t tp = 0;
  for (std::size_t r = 0; r < ranked_tp.size(); ++r) {
    tp += ranked_tp[r];
    const double precision = double(tp) / double(r + 1);
    for (std::size_t k = 0; k <= 100; ++k) {
      if (100 * tp < k * n_gt) break;
      best[k] = std::max(best[k], precision);
    }
  }
  double sum = 0;
  for (double b : best) sum += b;
  return sum / 101.0;
}

EvalReport evaluate(const Taxonomy& tax, std::span<const PredictionRecord> preds, std::span<const SceneAnnotation> gts,
                    const std::vector<std::size_t>& train_counts, const EvalOptions& opt) {
  if (train_counts.size() != tax.num_categories()) throw DataError("training counts do not cover every category");
  const auto idx = index_scenes(gts, preds);
  EvalReport r;
  r.setting = opt.setting;
  std::vector<std::size_t> counts;
  const auto def = category_aps(tax, preds, gts, idx, EvalSetting::Default, opt.iou_threshold, &counts);
  const auto known = category_aps(tax, preds, gts, idx, EvalSetting::KnownObject, opt.iou_threshold, nullptr);
  const auto& chosen = opt.setting == EvalSetting::Default ? def : known;
  r.rare.resize(tax.num_categories());
  for (std::size_t c = 0; c < tax.num_categories(); ++c) r.rare[c] = train_counts[c] < opt.rare_threshold;
  r.map_full = mean_of(chosen, [](std::size_t) { return true; });
  r.map_rare = mean_of(chosen, [&](std::size_t c) { return bool(r.rare[c]); });
  r.map_nonrare = mean_of(chosen, [&](std::size_t c) { return !r.rare[c]; });
  r.map_known_object = mean_of(known, [](std::size_t) { return true; });
  r.per_category_ap = chosen;
  r.gt_counts = counts;
  return r;
}

RoleReport scenario_eval(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                         std::span<const SceneAnnotation> gts, Scenario scenario, double thr) {
  const auto idx = index_scenes(gts, preds);
  RoleReport r;
  r.per_verb_ap.resize(tax.num_verbs());
  const Quality quality = [thr, scenario](const PredictionRecord& p, const HoiTriplet& g) {
    return object_quality(p, g, thr, scenario == Scenario::S2);
  };
  for (std::size_t v = 0; v < tax.num_verbs(); ++v) {
    std::vector<std::vector<std::size_t>> gt_of(gts.size());
    std::size_t npos = 0;
    for (std::size_t s = 0; s < gts.size(); ++s)
      for (std::size_t g = 0; g < gts[s].triplets.size(); ++g)
        if (gts[s].triplets[g].verb_class == v) {
          gt_of[s].push_back(g);
          ++npos;
        }
    if (npos == 0) continue;
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].verb_class == v) mine.push_back(i);
    r.per_verb_ap[v] = interpolated_ap(greedy(preds, ranked(preds, std::move(mine)), gts, idx, gt_of, quality, nullptr), npos);
  }
  r.mean_ap = mean_of(r.per_verb_ap, [](std::size_t) { return true; });
  return r;
}

std::vector<std::vector<bool>> ground_truth_hits(const Taxonomy& tax, std::span<const PredictionRecord> preds,
                                                 std::span<const SceneAnnotation> gts, double thr) {
  const auto idx = index_scenes(gts, preds);
  std::vector<std::vector<bool>> hit(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) hit[s].assign(gts[s].triplets.size(), false);
  const Quality quality = [thr](const PredictionRecord& p, const HoiTriplet& g) {
    return object_quality(p, g, thr, false);
  };
  for (std::size_t c = 0; c < tax.num_categories(); ++c) {
    const auto& pair = tax.pair(c);
    std::vector<std::vector<std::size_t>> gt_of(gts.size());
    for (std::size_t s = 0; s < gts.size(); ++s)
      for (std::size_t g = 0; g < gts[s].triplets.size(); ++g)
        if (gts[s].triplets[g].verb_class == pair.verb && gts[s].triplets[g].object_class == pair.object)
          gt_of[s].push_back(g);
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].verb_class == pair.verb && preds[i].object_class == pair.object) mine.push_back(i);
    greedy(preds, ranked(preds, std::move(mine)), gts, idx, gt_of, quality, &hit);
  }
  return hit;
}

json to_json(const PredictionRecord& p) {
  return {{"scene_id", p.scene_id},
          {"hbox", {p.human.cx, p.human.cy, p.human.w, p.human.h}},
          {"obox", {p.object.cx, p.object.cy, p.object.w, p.object.h}},
          {"object", p.object_class},
          {"verb", p.verb_class},
          {"score", p.score}};
}

PredictionRecord prediction_from_json(const json& j) {
  auto box = [](const json& b) { return Box{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()}; };
  PredictionRecord p{j.at("scene_id").get<std::uint64_t>(), box(j.at("hbox")), box(j.at("obox")),
                     j.at("object").get<std::size_t>(), j.at("verb").get<std::size_t>(), j.at("score").get<double>()};
  if (!std::isfinite(p.score)) throw DataError("prediction score is not finite");
  return p;
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> preds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& p : preds) out << to_json(p).dump() << '\n';
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(prediction_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

json to_json(const EvalReport& r) {
  auto num = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
  json aps = json::array();
  for (const auto& a : r.per_category_ap) aps.push_back(a ? json(*a) : json(nullptr));
  return {{"setting", r.setting == EvalSetting::Default ? "default" : "known_object"},
          {"map_full", num(r.map_full)},
          {"map_rare", num(r.map_rare)},
          {"map_nonrare", num(r.map_nonrare)},
          {"map_known_object", num(r.map_known_object)},
          {"per_category_ap", aps},
          {"gt_counts", r.gt_counts},
          {"rare", r.rare}};
}

}  // namespace hoi
