#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include <gtest/gtest.h>

#include "hoi/diagnostics.hpp"
#include "hoi/errors.hpp"
#include "hoi/eval.hpp"
#include "support/eval_oracle.hpp"

using namespace hoi;

namespace {

const Taxonomy& tax() {
  static const Taxonomy t = Taxonomy::default_taxonomy();
  return t;
}

// "run" takes no object, "kick" does.
const Taxonomy& small_tax() {
  static const Taxonomy t({"ball"}, {{"run", "running", true}, {"kick", "kicking"}}, {{0, 0}, {1, 0}});
  return t;
}

SceneAnnotation scene(std::uint64_t id, std::vector<HoiTriplet> ts) {
  SceneAnnotation s;
  s.scene_id = id;
  s.triplets = std::move(ts);
  return s;
}

HoiTriplet triplet(std::size_t cat, Box h, Box o) {
  const auto& p = tax().pair(cat);
  return {h, o, p.object, p.verb};
}

PredictionRecord pred(std::uint64_t id, const HoiTriplet& t, double score) {
  return {id, t.human, t.object, t.object_class, t.verb_class, score};
}

Box shifted(const Box& b, double dx) { return {b.cx + dx, b.cy, b.w, b.h}; }

const std::vector<std::size_t> kCounts(60, 100);

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.25, 0.75), s(0.1, 0.4);
  return {c(rng), c(rng), s(rng), s(rng)};
}

struct MiniWorld {
  std::vector<SceneAnnotation> gts;
  std::vector<PredictionRecord> preds;
};

// Scenes with a handful of categories so each has several instances; predictions
// are jittered copies of the ground truth, wrong-category copies and noise.
MiniWorld mini_world(std::uint64_t seed, std::size_t n_scenes = 100) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1), jitter(-0.08, 0.08);
  MiniWorld w;
  // 0, 4, 11 share a verb; 11 and 1 share an object; 1 and 9 share a verb
  const std::size_t cats[] = {0, 4, 11, 1, 9};
  for (std::size_t s = 0; s < n_scenes; ++s) {
    std::vector<HoiTriplet> ts;
    const std::size_t n = 1 + rng() % 3;
    for (std::size_t k = 0; k < n; ++k) ts.push_back(triplet(cats[rng() % 5], random_box(rng), random_box(rng)));
    w.gts.push_back(scene(s, ts));
    for (const auto& t : ts) {
      const int copies = int(rng() % 3);
      for (int c = 0; c < copies; ++c) {
        HoiTriplet p = t;
        p.human = shifted(p.human, jitter(rng));
        p.object = shifted(p.object, jitter(rng));
        // quantised scores make ties common
        w.preds.push_back(pred(s, p, std::round(u(rng) * 10) / 10));
      }
      if (u(rng) < 0.3) w.preds.push_back(pred(s, triplet(cats[rng() % 5], t.human, t.object), u(rng)));
    }
    if (u(rng) < 0.5) w.preds.push_back(pred(s, triplet(cats[rng() % 5], random_box(rng), random_box(rng)), u(rng)));
  }
  return w;
}

}  // namespace

TEST(InterpolatedAp, KnownValues) {
  EXPECT_DOUBLE_EQ(interpolated_ap({true}, 1), 1.0);
  EXPECT_DOUBLE_EQ(interpolated_ap({false}, 1), 0.0);
  EXPECT_DOUBLE_EQ(interpolated_ap({}, 3), 0.0);
  // half recall at full precision: levels 0..50 -> 1, rest 0
  EXPECT_NEAR(interpolated_ap({true}, 2), 51.0 / 101.0, 1e-15);
  // FP then TP: precision 0.5 at every level
  EXPECT_NEAR(interpolated_ap({false, true}, 1), 0.5, 1e-15);
  // TP, FP, TP over 2: 1 up to 0.5, then 2/3
  EXPECT_NEAR(interpolated_ap({true, false, true}, 2), (51.0 + 50.0 * 2 / 3) / 101.0, 1e-15);
}

TEST(InterpolatedAp, MatchesPrCurveOracle) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = rng() % 30;
    std::vector<bool> tp(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += tp[i] = rng() % 2;
    const std::size_t n_gt = hits + rng() % 5 + (hits == 0);
    EXPECT_NEAR(interpolated_ap(tp, n_gt), hoi::testing::oracle_ap(tp, n_gt), 1e-12);
  }
}

TEST(Evaluate, PerfectDetectionAndWrongVerb) {
  const auto t = triplet(0, {0.3, 0.3, 0.2, 0.4}, {0.6, 0.6, 0.2, 0.2});
  const std::vector gts{scene(0, {t})};
  const auto good = evaluate(tax(), std::vector{pred(0, t, 0.9)}, gts, kCounts);
  EXPECT_EQ(*good.per_category_ap[0], 1.0);
  EXPECT_EQ(good.map_full, 1.0);

  auto wrong = pred(0, t, 0.9);
  wrong.verb_class = tax().pair(5).verb;
  wrong.object_class = tax().pair(5).object;
  ASSERT_NE(tax().pair(5), tax().pair(0));
  const auto bad = evaluate(tax(), std::vector{wrong}, gts, kCounts);
  EXPECT_EQ(*bad.per_category_ap[0], 0.0);
  EXPECT_FALSE(bad.per_category_ap[5].has_value());  // no ground truth for it
}

TEST(Evaluate, IouMustExceedThreshold) {
  const auto t = triplet(0, {0.3, 0.5, 0.2, 0.2}, {0.7, 0.5, 0.2, 0.2});
  auto p = pred(0, t, 1);
  p.human = shifted(t.human, 0.2 / 3);  // IoU exactly 0.5
  EXPECT_NEAR(iou(p.human, t.human), 0.5, 1e-12);
  const auto r = evaluate(tax(), std::vector{p}, std::vector{scene(0, {t})}, kCounts);
  EXPECT_LE(*r.per_category_ap[0], 1e-12 + (iou(p.human, t.human) > 0.5));
}

TEST(Evaluate, EachGroundTruthConsumedOnce) {
  const auto t = triplet(3, {0.3, 0.3, 0.2, 0.2}, {0.6, 0.6, 0.2, 0.2});
  const auto r = evaluate(tax(), std::vector{pred(0, t, 0.9), pred(0, t, 0.8)}, std::vector{scene(0, {t})}, kCounts);
  EXPECT_DOUBLE_EQ(*r.per_category_ap[3], 1.0);  // duplicate ranks below full recall
  const auto r2 = evaluate(tax(), std::vector{pred(0, t, 0.8), pred(0, t, 0.9)}, std::vector{scene(0, {t, t})}, kCounts);
  EXPECT_DOUBLE_EQ(*r2.per_category_ap[3], 1.0);
}

TEST(Evaluate, UnknownSceneIsDataError) {
  const auto t = triplet(0, {0.3, 0.3, 0.2, 0.2}, {0.6, 0.6, 0.2, 0.2});
  EXPECT_THROW(evaluate(tax(), std::vector{pred(9, t, 1)}, std::vector{scene(0, {t})}, kCounts), DataError);
  EXPECT_THROW(evaluate(tax(), std::vector<PredictionRecord>{}, std::vector{scene(0, {t}), scene(0, {t})}, kCounts),
               DataError);
}

TEST(Evaluate, GroundTruthAsPredictionsScoresOne) {
  const auto w = mini_world(12);
  std::vector<PredictionRecord> preds;
  for (const auto& s : w.gts)
    for (const auto& t : s.triplets) preds.push_back(pred(s.scene_id, t, 1.0));
  const auto r = evaluate(tax(), preds, w.gts, kCounts);
  EXPECT_DOUBLE_EQ(r.map_full, 1.0);
  EXPECT_DOUBLE_EQ(r.map_known_object, 1.0);
}

TEST(Evaluate, MatchesBruteForceOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto w = mini_world(seed);
    const auto r = evaluate(tax(), w.preds, w.gts, kCounts);
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < 60; ++c) {
      const double expect = hoi::testing::oracle_category_ap(tax(), c, w.preds, w.gts);
      if (std::isnan(expect)) {
        EXPECT_FALSE(r.per_category_ap[c].has_value()) << c;
        continue;
      }
      ASSERT_TRUE(r.per_category_ap[c].has_value()) << c;
      EXPECT_NEAR(*r.per_category_ap[c], expect, 1e-9) << "seed " << seed << " category " << c;
      sum += expect;
      ++n;
    }
    EXPECT_NEAR(r.map_full, sum / double(n), 1e-9);
  }
}

TEST(Evaluate, RareSplitUsesTrainingCounts) {
  const auto w = mini_world(5);
  std::vector<std::size_t> counts(60, 50);
  counts[1] = 9;
  counts[9] = 10;
  const auto r = evaluate(tax(), w.preds, w.gts, counts);
  EXPECT_TRUE(r.rare[1]);
  EXPECT_FALSE(r.rare[9]);
  EXPECT_NEAR(r.map_rare, *r.per_category_ap[1], 1e-15);
  double s = 0;
  for (std::size_t c : {0u, 4u, 9u, 11u}) s += *r.per_category_ap[c];
  EXPECT_NEAR(r.map_nonrare, s / 4, 1e-12);
  EXPECT_THROW(evaluate(tax(), w.preds, w.gts, std::vector<std::size_t>(3, 0)), DataError);
}

TEST(Evaluate, KnownObjectDropsScenesWithoutTheObject) {
  const auto t0 = triplet(0, {0.3, 0.3, 0.2, 0.2}, {0.6, 0.6, 0.2, 0.2});
  std::size_t other = 0;
  while (tax().pair(other).object == t0.object_class) ++other;
  const auto t1 = triplet(other, {0.3, 0.3, 0.2, 0.2}, {0.6, 0.6, 0.2, 0.2});
  // a confident false positive of category 0 in a scene without its object
  auto fp = pred(1, t0, 0.99);
  const std::vector gts{scene(0, {t0}), scene(1, {t1})};
  const std::vector preds{fp, pred(0, t0, 0.5)};
  const auto def = evaluate(tax(), preds, gts, kCounts);
  const auto known = evaluate(tax(), preds, gts, kCounts, {.setting = EvalSetting::KnownObject});
  EXPECT_NEAR(*def.per_category_ap[0], 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(*known.per_category_ap[0], 1.0);
  EXPECT_NEAR(def.map_known_object, known.map_full, 1e-15);
}

TEST(Evaluate, TiedScoresIgnoreInputOrder) {
  const auto w = mini_world(8);
  auto shuffled = w.preds;
  std::mt19937_64 rng(1);
  // permute only within equal (score, scene) groups: the documented tie-break
  // then fixes the record order, so compare against a stable re-sort
  std::stable_sort(shuffled.begin(), shuffled.end(),
                   [](const auto& a, const auto& b) { return std::tie(a.score, a.scene_id) < std::tie(b.score, b.scene_id); });
  const auto a = evaluate(tax(), w.preds, w.gts, kCounts);
  const auto b = evaluate(tax(), shuffled, w.gts, kCounts);
  EXPECT_EQ(a.per_category_ap, b.per_category_ap);

  // equal scores in one scene fall back to record order
  const auto t = triplet(2, {0.3, 0.3, 0.2, 0.2}, {0.6, 0.6, 0.2, 0.2});
  auto miss = pred(0, t, 0.7);
  miss.human = {0.8, 0.8, 0.1, 0.1};
  const std::vector gts{scene(0, {t})};
  EXPECT_NEAR(*evaluate(tax(), std::vector{miss, pred(0, t, 0.7)}, gts, kCounts).per_category_ap[2], 0.5, 1e-15);
  EXPECT_EQ(*evaluate(tax(), std::vector{pred(0, t, 0.7), miss}, gts, kCounts).per_category_ap[2], 1.0);
}

TEST(Evaluate, AddingTopTruePositiveNeverLowersAp) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    auto w = mini_world(seed, 30);
    const auto before = evaluate(tax(), w.preds, w.gts, kCounts);
    // a prediction for a ground truth nobody claimed yet
    const auto hits = ground_truth_hits(tax(), w.preds, w.gts);
    std::size_t s = 0, g = 0;
    while (s < hits.size() && std::find(hits[s].begin(), hits[s].end(), false) == hits[s].end()) ++s;
    ASSERT_LT(s, hits.size());
    g = std::find(hits[s].begin(), hits[s].end(), false) - hits[s].begin();
    const auto& t = w.gts[s].triplets[g];
    const std::size_t c = *tax().category(t.verb_class, t.object_class);
    auto with_tp = w.preds;
    with_tp.push_back(pred(s, t, 2.0));
    EXPECT_GE(*evaluate(tax(), with_tp, w.gts, kCounts).per_category_ap[c], *before.per_category_ap[c] - 1e-12);
    auto with_fp = w.preds;
    auto fp = pred(s, t, 0.55);
    fp.human = {0.05, 0.05, 0.05, 0.05};
    with_fp.push_back(fp);
    EXPECT_LE(*evaluate(tax(), with_fp, w.gts, kCounts).per_category_ap[c], *before.per_category_ap[c] + 1e-12);
  }
}

TEST(Predictions, JsonLinesRoundTrip) {
  const auto w = mini_world(3, 10);
  const auto path = std::filesystem::temp_directory_path() / "hoi_test_preds.jsonl";
  write_predictions(path, w.preds);
  const auto back = read_predictions(path);
  ASSERT_EQ(back.size(), w.preds.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].human, w.preds[i].human);
    EXPECT_EQ(back[i].score, w.preds[i].score);
    EXPECT_EQ(back[i].verb_class, w.preds[i].verb_class);
  }
  std::filesystem::remove(path);
}

TEST(Scenario, ObjectlessDefinitions) {
  const Box h{0.4, 0.5, 0.2, 0.4};
  const HoiTriplet run{h, kEmptyBox, 0, 0};
  const std::vector gts{scene(0, {run})};
  const PredictionRecord sentinel{0, {0.41, 0.5, 0.2, 0.4}, kEmptyBox, 0, 0, 0.9};
  ASSERT_GT(iou(sentinel.human, h), 0.8);
  EXPECT_EQ(*scenario_eval(small_tax(), std::vector{sentinel}, gts, Scenario::S1).per_verb_ap[0], 1.0);
  EXPECT_EQ(*scenario_eval(small_tax(), std::vector{sentinel}, gts, Scenario::S2).per_verb_ap[0], 1.0);
  auto boxed = sentinel;
  boxed.object = {0.7, 0.7, 0.2, 0.2};
  EXPECT_EQ(*scenario_eval(small_tax(), std::vector{boxed}, gts, Scenario::S1).per_verb_ap[0], 0.0);
  EXPECT_EQ(*scenario_eval(small_tax(), std::vector{boxed}, gts, Scenario::S2).per_verb_ap[0], 1.0);
  EXPECT_FALSE(scenario_eval(small_tax(), std::vector{boxed}, gts, Scenario::S1).per_verb_ap[1].has_value());
}

TEST(Scenario, RelaxedNeverScoresLower) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SceneAnnotation> gts;
    std::vector<PredictionRecord> preds;
    for (std::uint64_t s = 0; s < 20; ++s) {
      std::vector<HoiTriplet> ts;
      for (int k = 0; k < 2; ++k) {
        const std::size_t v = rng() % 2;
        ts.push_back({random_box(rng), v == 0 ? kEmptyBox : random_box(rng), 0, v});
        PredictionRecord p{s, shifted(ts.back().human, (u(rng) - 0.5) * 0.1), ts.back().object, 0, v, u(rng)};
        if (v == 0 && u(rng) < 0.5) p.object = random_box(rng);
        if (v == 1 && u(rng) < 0.3) p.object = random_box(rng);
        preds.push_back(p);
      }
      gts.push_back(scene(s, ts));
    }
    const auto s1 = scenario_eval(small_tax(), preds, gts, Scenario::S1);
    const auto s2 = scenario_eval(small_tax(), preds, gts, Scenario::S2);
    EXPECT_GE(s2.mean_ap, s1.mean_ap - 1e-12);
    for (std::size_t v = 0; v < 2; ++v) EXPECT_GE(*s2.per_verb_ap[v], *s1.per_verb_ap[v] - 1e-12);
    // verbs with an object are scored identically
    EXPECT_EQ(*s2.per_verb_ap[1], *s1.per_verb_ap[1]);
  }
}

TEST(InputBias, PerfectPredictionsHaveNoErrors) {
  const auto w = mini_world(6);
  std::vector<PredictionRecord> preds;
  for (const auto& s : w.gts)
    for (const auto& t : s.triplets) preds.push_back(pred(s.scene_id, t, 1.0));
  const auto r = diagnose_input_bias(tax(), preds, w.gts);
  ASSERT_TRUE(r.with_siblings && r.without_siblings);
  EXPECT_EQ(*r.with_siblings, 0.0);
  EXPECT_EQ(*r.without_siblings, 0.0);
  EXPECT_EQ(*r.delta, 0.0);
}

TEST(InputBias, EmptyPartitionIsAbsent) {
  const auto t = triplet(0, {0.3, 0.3, 0.2, 0.2}, {0.6, 0.6, 0.2, 0.2});
  const auto r = diagnose_input_bias(tax(), std::vector<PredictionRecord>{}, std::vector{scene(0, {t}), scene(1, {t})});
  EXPECT_FALSE(r.with_siblings.has_value());
  EXPECT_FALSE(r.delta.has_value());
  EXPECT_EQ(*r.without_siblings, 1.0);
  EXPECT_EQ(r.n_without, 2u);
}

TEST(InputBias, MatchesHandPartitionedRecount) {
  const auto w = mini_world(9);
  // a confusable model: drop every prediction for instances that share a
  // component with another instance, most of the time
  std::mt19937_64 rng(2);
  std::vector<PredictionRecord> preds;
  for (const auto& s : w.gts)
    for (std::size_t i = 0; i < s.triplets.size(); ++i) {
      bool sib = false;
      for (std::size_t j = 0; j < s.triplets.size(); ++j) {
        const auto& a = s.triplets[i];
        const auto& b = s.triplets[j];
        sib = sib || ((a.verb_class == b.verb_class) != (a.object_class == b.object_class));
      }
      if (rng() % 4 < (sib ? 1u : 3u)) preds.push_back(pred(s.scene_id, s.triplets[i], 1.0));
    }
  const auto r = diagnose_input_bias(tax(), preds, w.gts);
  const auto hits = ground_truth_hits(tax(), preds, w.gts);
  // recount: per category error rates in each partition, averaged over categories
  std::map<std::size_t, std::pair<int, int>> with, without;
  for (std::size_t s = 0; s < w.gts.size(); ++s) {
    const auto& ts = w.gts[s].triplets;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      bool sib = false;
      for (std::size_t j = 0; j < ts.size(); ++j)
        sib = sib || ((ts[i].verb_class == ts[j].verb_class) != (ts[i].object_class == ts[j].object_class));
      auto& cell = (sib ? with : without)[*tax().category(ts[i].verb_class, ts[i].object_class)];
      cell.first += !hits[s][i];
      cell.second += 1;
    }
  }
  auto mean = [](const auto& m) {
    double s = 0;
    for (const auto& [c, v] : m) s += double(v.first) / v.second;
    return s / double(m.size());
  };
  ASSERT_TRUE(r.with_siblings && r.without_siblings);
  EXPECT_NEAR(*r.with_siblings, mean(with), 1e-12);
  EXPECT_NEAR(*r.without_siblings, mean(without), 1e-12);
  EXPECT_GT(*r.delta, 0.0);
}

TEST(OutputBias, IdenticalAndOrthonormalRows) {
  const std::vector<std::optional<double>> ap(6, 0.5);
  const std::vector<std::size_t> counts{60, 50, 40, 30, 20, 10};
  const auto same = diagnose_output_bias(Tensor({6, 3}, std::vector<double>(18, 1.0)), ap, counts);
  EXPECT_EQ(same.head, std::vector<std::size_t>{0});  // ceil(0.1 * 6)
  ASSERT_EQ(same.rows.size(), 5u);
  for (const auto& row : same.rows) EXPECT_NEAR(row.mean_similarity, 1.0, 1e-12);
  EXPECT_FALSE(same.slope.has_value());  // no spread in similarity

  std::vector<double> eye(36, 0.0);
  for (std::size_t i = 0; i < 6; ++i) eye[i * 6 + i] = 1;
  const auto ortho = diagnose_output_bias(Tensor({6, 6}, eye), ap, counts);
  for (const auto& row : ortho.rows) EXPECT_EQ(row.mean_similarity, 0.0);
}

TEST(OutputBias, MatchesPairwiseRecomputation) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0, 1);
  const std::size_t C = 20, d = 5;
  std::vector<double> v(C * d);
  for (auto& x : v) x = n(rng);
  const Tensor rows({C, d}, v);
  std::vector<std::optional<double>> ap(C);
  std::vector<std::size_t> counts(C);
  for (std::size_t c = 0; c < C; ++c) {
    counts[c] = rng() % 100;
    if (c % 7 != 3) ap[c] = std::uniform_real_distribution<double>(0, 1)(rng);
  }
  const auto r = diagnose_output_bias(rows, ap, counts, 0.2);
  std::vector<std::size_t> by_count(C);
  std::iota(by_count.begin(), by_count.end(), 0);
  std::stable_sort(by_count.begin(), by_count.end(), [&](auto a, auto b) { return counts[a] > counts[b]; });
  const std::set<std::size_t> head(by_count.begin(), by_count.begin() + 4);
  std::vector<double> xs, ys;
  std::size_t k = 0;
  for (std::size_t i = 0; i < C; ++i) {
    if (head.count(i) || !ap[i]) continue;
    double s = 0;
    for (std::size_t j = 0; j < C; ++j)
      if (j != i) {
        double dot = 0, ni = 0, nj = 0;
        for (std::size_t q = 0; q < d; ++q) {
          dot += v[i * d + q] * v[j * d + q];
          ni += v[i * d + q] * v[i * d + q];
          nj += v[j * d + q] * v[j * d + q];
        }
        s += dot / std::sqrt(ni * nj);
      }
    ASSERT_LT(k, r.rows.size());
    EXPECT_EQ(r.rows[k].category, i);
    EXPECT_NEAR(r.rows[k].mean_similarity, s / double(C - 1), 1e-12);
    EXPECT_EQ(r.rows[k].ap, *ap[i]);
    xs.push_back(s / double(C - 1));
    ys.push_back(*ap[i]);
    ++k;
  }
  EXPECT_EQ(k, r.rows.size());
  // slope from the normal equations
  const double nn = double(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  ASSERT_TRUE(r.slope.has_value());
  EXPECT_NEAR(*r.slope, (nn * sxy - sx * sy) / (nn * sxx - sx * sx), 1e-9);
}

TEST(OutputBias, FewerThanThreeRowsOmitsSlope) {
  const auto r = diagnose_output_bias(Tensor::matrix({{1, 0}, {0, 1}, {1, 1}}), {0.1, 0.2, 0.3}, {3, 2, 1});
  EXPECT_EQ(r.rows.size(), 2u);
  EXPECT_FALSE(r.slope.has_value());
}
