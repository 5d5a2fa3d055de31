#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "hoi/detector_loss.hpp"
#include "hoi/errors.hpp"
#include "hoi/hungarian.hpp"
#include "hoi/ops.hpp"
#include "support/gradcheck.hpp"

using namespace hoi;

namespace {

struct Brute {
  double best = INFINITY;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // lexicographically first optimum
};

// Enumerates every injective map from the smaller side into the larger one.
Brute brute_force(const CostMatrix& c) {
  const bool by_rows = c.rows <= c.cols;
  const std::size_t n = by_rows ? c.rows : c.cols, m = by_rows ? c.cols : c.rows;
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  Brute b;
  do {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += by_rows ? c(i, perm[i]) : c(perm[i], i);
    if (s < b.best) b.best = s;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return b;
}

CostMatrix random_cost(std::mt19937_64& rng, std::size_t r, std::size_t c, bool integers) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> k(0, 3);
  std::vector<double> v(r * c);
  for (auto& x : v) x = integers ? double(k(rng)) : u(rng);
  return CostMatrix(r, c, v);
}

double cost_of(const CostMatrix& c, const MatchResult& m) {
  double s = 0;
  for (auto [q, g] : m.pairs) s += c(q, g);
  return s;
}

// "Unmatched" (represented as cols) sorts after every real gt index.
std::vector<std::size_t> row_assignment(const CostMatrix& c, const MatchResult& m) {
  std::vector<std::size_t> a(c.rows, c.cols);
  for (auto [q, g] : m.pairs) a[q] = g;
  return a;
}

// Lexicographically smallest optimal row assignment by exhaustive search.
std::vector<std::size_t> brute_lexicographic(const CostMatrix& c, double best) {
  std::vector<std::size_t> cur(c.rows), found;
  std::vector<char> used(c.cols, 0);
  const std::size_t need = std::min(c.rows, c.cols);
  const double tol = 1e-12 * (1 + std::abs(best));
  std::function<bool(std::size_t, std::size_t, double)> rec = [&](std::size_t i, std::size_t matched, double s) {
    if (i == c.rows) {
      if (matched == need && std::abs(s - best) <= tol) {
        found = cur;
        return true;
      }
      return false;
    }
    for (std::size_t j = 0; j <= c.cols; ++j) {
      if (j < c.cols) {
        if (used[j]) continue;
        used[j] = 1;
        cur[i] = j;
        if (rec(i + 1, matched + 1, s + c(i, j))) return true;
        used[j] = 0;
      } else if (c.rows - i - 1 >= need - matched) {
        cur[i] = c.cols;
        if (rec(i + 1, matched, s)) return true;
      }
    }
    return false;
  };
  rec(0, 0, 0.0);
  return found;
}

DetectorOutput fake_output(const std::vector<Box>& hb, const std::vector<Box>& ob, const Tensor& obj_logits,
                           const Tensor& hoi_logits, const Tensor& verb_logits) {
  DetectorOutput o;
  o.instance.human_boxes = boxes_tensor(hb);
  o.instance.object_boxes = boxes_tensor(ob);
  o.instance.object_logits = obj_logits;
  o.interaction.hoi_logits = hoi_logits;
  o.interaction.verb_logits = verb_logits;
  return o;
}

Taxonomy small_taxonomy() {
  return Taxonomy({"cup", "ball"}, {{"hold", "holding"}, {"kick", "kicking"}, {"stand", "standing", true}},
                  {{0, 0}, {0, 1}, {1, 1}, {2, 0}});
}

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.3, 0.7), s(0.1, 0.4);
  return {c(rng), c(rng), s(rng), s(rng)};
}

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> n(0, scale);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return Tensor({r, c}, v);
}

}  // namespace

TEST(Hungarian, DiagonalOptimum) {
  const auto m = hungarian(CostMatrix(2, 2, {1, 2, 2, 1}));
  EXPECT_EQ(m.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
  EXPECT_DOUBLE_EQ(m.cost, 2.0);
}

TEST(Hungarian, ZeroDiagonal) {
  const auto m = hungarian(CostMatrix(2, 2, {0, 1, 1, 0}));
  EXPECT_EQ(m.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
  EXPECT_DOUBLE_EQ(m.cost, 0.0);
}

TEST(Hungarian, MatchesBruteForceOnSquare6x6) {
  std::mt19937_64 rng(61);
  for (int t = 0; t < 200; ++t) {
    const CostMatrix c = random_cost(rng, 6, 6, false);
    const auto m = hungarian(c);
    EXPECT_NEAR(cost_of(c, m), brute_force(c).best, 1e-12);
  }
}

TEST(Hungarian, MatchesBruteForceOnRectangularUpTo7) {
  std::mt19937_64 rng(62);
  for (int t = 0; t < 200; ++t) {
    const std::size_t r = 1 + rng() % 7, c = 1 + rng() % 7;
    const CostMatrix cm = random_cost(rng, r, c, t % 2 == 0);
    const auto m = hungarian(cm);
    ASSERT_EQ(m.pairs.size(), std::min(r, c));
    EXPECT_EQ(m.unmatched_queries.size(), r - m.pairs.size());
    std::vector<char> q_used(r, 0), g_used(c, 0);
    for (auto [q, g] : m.pairs) {
      EXPECT_FALSE(q_used[q]++);
      EXPECT_FALSE(g_used[g]++);
    }
    EXPECT_NEAR(cost_of(cm, m), brute_force(cm).best, 1e-12) << r << "x" << c;
    EXPECT_NEAR(assignment_cost(cm), m.cost, 1e-12);
  }
}

TEST(Hungarian, TieBreakIsLexicographicallySmallest) {
  std::mt19937_64 rng(63);
  for (int t = 0; t < 150; ++t) {
    const std::size_t r = 1 + rng() % 6, c = 1 + rng() % 6;
    const CostMatrix cm = random_cost(rng, r, c, true);  // small integers: many ties
    const auto m = hungarian(cm);
    EXPECT_EQ(row_assignment(cm, m), brute_lexicographic(cm, brute_force(cm).best)) << r << "x" << c;
  }
}

TEST(Hungarian, AllEqualCostsGiveIdentity) {
  const auto m = hungarian(CostMatrix(3, 2, std::vector<double>(6, 1.0)));
  EXPECT_EQ(m.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
  EXPECT_EQ(m.unmatched_queries, std::vector<std::size_t>{2});
}

TEST(Hungarian, EmptySides) {
  EXPECT_TRUE(hungarian(CostMatrix(3, 0, {})).pairs.empty());
  EXPECT_EQ(hungarian(CostMatrix(3, 0, {})).unmatched_queries.size(), 3u);
  EXPECT_TRUE(hungarian(CostMatrix(0, 2, {})).pairs.empty());
}

TEST(Hungarian, NonFiniteCostIsDataError) {
  EXPECT_THROW(hungarian(CostMatrix(2, 2, {0, NAN, 1, 0})), DataError);
  EXPECT_THROW(hungarian(CostMatrix(1, 1, {INFINITY})), DataError);
}

TEST(MatchCost, PerfectPredictionDominatesItsRow) {
  const Taxonomy tax = small_taxonomy();
  const HoiTriplet gt{{0.4, 0.4, 0.2, 0.3}, {0.6, 0.5, 0.2, 0.2}, 1, 1};
  std::mt19937_64 rng(5);
  std::vector<Box> hb{gt.human, random_box(rng), random_box(rng)}, ob{gt.object, random_box(rng), random_box(rng)};
  auto obj = Tensor::matrix({{0, 5, 0}, {0, 0, 0}, {0, 0, 0}});
  auto hoi = Tensor::matrix({{-5, -5, 5, -5}, {0, 0, 0, 0}, {0, 0, 0, 0}});
  const auto c = match_cost(fake_output(hb, ob, obj, hoi, Tensor::zeros({3, 3})), tax, {gt}, {});
  EXPECT_LT(c(0, 0), c(1, 0));
  EXPECT_LT(c(0, 0), c(2, 0));
  EXPECT_EQ(hungarian(c).pairs.front(), (std::pair<std::size_t, std::size_t>{0, 0}));
}

TEST(MatchCost, IdenticalPredictionsGiveEqualRowsAndLowerQueryWins) {
  const Taxonomy tax = small_taxonomy();
  const HoiTriplet gt{{0.4, 0.4, 0.2, 0.3}, {0.6, 0.5, 0.2, 0.2}, 0, 0};
  const Box h{0.45, 0.4, 0.2, 0.2}, o{0.6, 0.55, 0.1, 0.2};
  const auto c = match_cost(fake_output({h, h}, {o, o}, Tensor::zeros({2, 3}), Tensor::zeros({2, 4}),
                                        Tensor::zeros({2, 3})),
                            tax, {gt}, {});
  EXPECT_EQ(c(0, 0), c(1, 0));
  const auto m = hungarian(c);
  EXPECT_EQ(m.pairs.front().first, 0u);
  EXPECT_EQ(m.unmatched_queries, std::vector<std::size_t>{1});
}

TEST(MatchCost, EqualsIndependentRecomputation) {
  const Taxonomy tax = small_taxonomy();
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const std::size_t nq = 5, ng = 1 + rng() % 4;
    std::vector<Box> hb, ob;
    for (std::size_t i = 0; i < nq; ++i) {
      hb.push_back(random_box(rng));
      ob.push_back(random_box(rng));
    }
    std::vector<HoiTriplet> gt;
    for (std::size_t j = 0; j < ng; ++j) {
      const auto& p = tax.pair(rng() % 4);
      gt.push_back({random_box(rng), tax.verb(p.verb).objectless ? kEmptyBox : random_box(rng), p.object, p.verb});
    }
    const Tensor obj = random_matrix(rng, nq, 3), hoi = random_matrix(rng, nq, 4);
    const MatchWeights w{1.3, 2.5, 0.7};
    const auto c = match_cost(fake_output(hb, ob, obj, hoi, Tensor::zeros({nq, 3})), tax, gt, w);

    std::vector<double> v(nq * ng);
    for (std::size_t i = 0; i < nq; ++i) {
      double z = 0;
      for (std::size_t k = 0; k < 3; ++k) z += std::exp(obj.at(i, k));
      for (std::size_t j = 0; j < ng; ++j) {
        const std::size_t cat = *tax.category(gt[j].verb_class, gt[j].object_class);
        const double po = std::exp(obj.at(i, gt[j].object_class)) / z;
        const double ph = 1 / (1 + std::exp(-hoi.at(i, cat)));
        double x = -w.cls * (po + ph) / 2;
        auto l1 = [](const Box& a, const Box& b) {
          return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
        };
        x += w.box * l1(hb[i], gt[j].human) + w.giou * (1 - giou(hb[i], gt[j].human));
        if (!gt[j].object.degenerate()) x += w.box * l1(ob[i], gt[j].object) + w.giou * (1 - giou(ob[i], gt[j].object));
        v[i * ng + j] = x;
      }
    }
    const CostMatrix oracle(nq, ng, v);
    for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(c.values[k], v[k], 1e-12);
    EXPECT_EQ(hungarian(c).pairs, hungarian(oracle).pairs);
  }
}

TEST(DetectorLoss, PerfectFitVanishes) {
  const Taxonomy tax = small_taxonomy();
  const HoiTriplet gt{{0.4, 0.4, 0.2, 0.3}, {0.6, 0.5, 0.2, 0.2}, 1, 0};  // hold ball, category 1
  const double big = 40;
  const auto obj = Tensor::matrix({{-big, big, -big}, {-big, -big, big}});
  const auto hoi = Tensor::matrix({{-big, big, -big, -big}, {-big, -big, -big, -big}});
  const auto verb = Tensor::matrix({{big, -big, -big}, {-big, -big, -big}});
  const auto out = fake_output({gt.human, {0.5, 0.5, 0.1, 0.1}}, {gt.object, {0.5, 0.5, 0.1, 0.1}}, obj, hoi, verb);
  MatchResult m;
  m.pairs = {{0, 0}};
  m.unmatched_queries = {1};
  const auto L = detector_loss(out, tax, {gt}, m, {});
  EXPECT_EQ(L.l_box.item(), 0.0);
  EXPECT_NEAR(L.l_iou.item(), 0.0, 1e-15);
  EXPECT_LT(L.l_cls_object.item(), 1e-15);
  EXPECT_LT(L.l_cls_action.item(), 1e-15);
}

TEST(DetectorLoss, EmptySceneHasNoBoxTerms) {
  const Taxonomy tax = small_taxonomy();
  std::mt19937_64 rng(3);
  const auto out = fake_output({random_box(rng), random_box(rng)}, {random_box(rng), random_box(rng)},
                               random_matrix(rng, 2, 3), random_matrix(rng, 2, 4), random_matrix(rng, 2, 3));
  MatchResult m;
  m.unmatched_queries = {0, 1};
  const auto L = detector_loss(out, tax, {}, m, {});
  EXPECT_EQ(L.l_box.item(), 0.0);
  EXPECT_EQ(L.l_iou.item(), 0.0);
  EXPECT_GT(L.l_cls_object.item(), 0.0);  // background terms remain
  EXPECT_GT(L.l_cls_action.item(), 0.0);  // every action logit is a negative
}

TEST(DetectorLoss, TotalIsWeightedSumWithDefaultWeights) {
  const Taxonomy tax = small_taxonomy();
  std::mt19937_64 rng(4);
  const DetectorLossConfig cfg;
  EXPECT_EQ(cfg.lambda_box, 2.5);
  EXPECT_EQ(cfg.lambda_giou, 1.0);
  EXPECT_EQ(cfg.lambda_cls_object, 1.0);
  EXPECT_EQ(cfg.lambda_cls_action, 1.0);
  for (int t = 0; t < 10; ++t) {
    const auto out = fake_output({random_box(rng), random_box(rng), random_box(rng)},
                                 {random_box(rng), random_box(rng), random_box(rng)}, random_matrix(rng, 3, 3),
                                 random_matrix(rng, 3, 4), random_matrix(rng, 3, 3));
    const std::vector<HoiTriplet> gt{{random_box(rng), random_box(rng), 0, 0},
                                     {random_box(rng), kEmptyBox, 0, 2}};
    const auto m = hungarian(match_cost(out, tax, gt, {}));
    const auto L = detector_loss(out, tax, gt, m, cfg);
    const double manual = 2.5 * L.l_box.item() + 1.0 * L.l_iou.item() + L.l_cls_object.item() + L.l_cls_action.item();
    EXPECT_NEAR(L.total.item(), manual, 1e-12);
    EXPECT_GE(L.l_box.item(), 0.0);
    EXPECT_GE(L.l_iou.item(), 0.0);
  }
}

TEST(DetectorLoss, BoxTermsMatchManualAverage) {
  const Taxonomy tax = small_taxonomy();
  const HoiTriplet a{{0.4, 0.4, 0.2, 0.3}, {0.6, 0.5, 0.2, 0.2}, 0, 0}, b{{0.3, 0.3, 0.2, 0.2}, kEmptyBox, 0, 2};
  const Box ph0{0.42, 0.38, 0.2, 0.25}, po0{0.55, 0.5, 0.25, 0.2}, ph1{0.3, 0.35, 0.1, 0.2};
  const auto out = fake_output({ph0, ph1}, {po0, {0.5, 0.5, 0.1, 0.1}}, Tensor::zeros({2, 3}), Tensor::zeros({2, 4}),
                               Tensor::zeros({2, 3}));
  MatchResult m;
  m.pairs = {{0, 0}, {1, 1}};
  const auto L = detector_loss(out, tax, {a, b}, m, {});
  // the objectless ground truth contributes no object-box term
  const double l1 = l1_distance(ph0, a.human) + l1_distance(po0, a.object) + l1_distance(ph1, b.human);
  const double gi = (1 - giou(ph0, a.human)) + (1 - giou(po0, a.object)) + (1 - giou(ph1, b.human));
  EXPECT_NEAR(L.l_box.item(), l1 / 2, 1e-12);
  EXPECT_NEAR(L.l_iou.item(), gi / 2, 1e-12);
}

TEST(DetectorLoss, ObjectCrossEntropyWeightsBackground) {
  const Taxonomy tax = small_taxonomy();
  std::mt19937_64 rng(8);
  const Tensor obj = random_matrix(rng, 3, 3);
  const auto out = fake_output({random_box(rng), random_box(rng), random_box(rng)},
                               {random_box(rng), random_box(rng), random_box(rng)}, obj, Tensor::zeros({3, 4}),
                               Tensor::zeros({3, 3}));
  const HoiTriplet gt{random_box(rng), random_box(rng), 1, 1};
  MatchResult m;
  m.pairs = {{1, 0}};
  m.unmatched_queries = {0, 2};
  const auto L = detector_loss(out, tax, {gt}, m, {});
  auto nll = [&](std::size_t i, std::size_t k) {
    double z = 0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(obj.at(i, c));
    return -(obj.at(i, k) - std::log(z));
  };
  const double expect = (0.1 * nll(0, 2) + 1.0 * nll(1, 1) + 0.1 * nll(2, 2)) / 1.2;
  EXPECT_NEAR(L.l_cls_object.item(), expect, 1e-12);
}

TEST(FocalLoss, MatchesScalarFormula) {
  const double a = 0.25, g = 2;
  auto ref = [&](double x, double y) {
    const double p = 1 / (1 + std::exp(-x));
    return y ? -a * std::pow(1 - p, g) * std::log(p) : -(1 - a) * std::pow(p, g) * std::log(1 - p);
  };
  const Tensor x = Tensor::from_values({-2.0, -0.3, 0.0, 0.7, 3.0});
  const std::vector<double> y{0, 1, 0, 1, 1};
  double expect = 0;
  for (std::size_t i = 0; i < 5; ++i) expect += ref(x[i], y[i]);
  EXPECT_NEAR(focal_loss(x, y, a, g).item(), expect, 1e-12);
}

TEST(DetectorLossGradient, BoxAndIouTerms) {
  std::mt19937_64 rng(21);
  std::vector<Box> pb, tb;
  for (int i = 0; i < 3; ++i) {
    pb.push_back(random_box(rng));
    tb.push_back(random_box(rng));
  }
  const Tensor target = boxes_tensor(tb);
  EXPECT_LT(hoi::testing::gradcheck([&](const std::vector<Tensor>& in) { return l1_box_loss(in[0], target); },
                               {boxes_tensor(pb)}),
            1e-4);
  EXPECT_LT(hoi::testing::gradcheck([&](const std::vector<Tensor>& in) { return giou_loss(in[0], target); },
                               {boxes_tensor(pb)}),
            1e-4);
}

TEST(DetectorLossGradient, FullDetectorLoss) {
  const Taxonomy tax = small_taxonomy();
  std::mt19937_64 rng(22);
  const std::vector<HoiTriplet> gt{{random_box(rng), random_box(rng), 0, 0}, {random_box(rng), kEmptyBox, 0, 2}};
  const std::vector<Tensor> inputs{boxes_tensor({random_box(rng), random_box(rng), random_box(rng)}),
                                   boxes_tensor({random_box(rng), random_box(rng), random_box(rng)}),
                                   random_matrix(rng, 3, 3), random_matrix(rng, 3, 4), random_matrix(rng, 3, 3)};
  MatchResult m;
  m.pairs = {{0, 1}, {2, 0}};
  m.unmatched_queries = {1};
  for (auto kind : {ActionLoss::Focal, ActionLoss::Softmax}) {
    DetectorLossConfig cfg;
    cfg.action_loss = kind;
    auto f = [&](const std::vector<Tensor>& in) {
      DetectorOutput o;
      o.instance.human_boxes = in[0];
      o.instance.object_boxes = in[1];
      o.instance.object_logits = in[2];
      o.interaction.hoi_logits = in[3];
      o.interaction.verb_logits = in[4];
      return detector_loss(o, tax, gt, m, cfg).total;
    };
    EXPECT_LT(hoi::testing::gradcheck(f, inputs), 1e-4);
  }
}
