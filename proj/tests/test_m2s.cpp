#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "hoi/detector.hpp"
#include "hoi/errors.hpp"
#include "hoi/kmeans.hpp"
#include "hoi/m2s.hpp"
#include "hoi/ops.hpp"
#include "support/gradcheck.hpp"

using namespace hoi;

namespace {

const Taxonomy& tax() {
  static const Taxonomy t = Taxonomy::default_taxonomy();
  return t;
}

Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n(0, 1);
  std::vector<double> v(r * c);
  for (auto& x : v) x = n(rng);
  return Tensor({r, c}, v);
}

double neg_log_softmax(const Tensor& x, std::size_t row, std::size_t col, double scale = 1.0) {
  double m = -INFINITY;
  for (std::size_t j = 0; j < x.dim(1); ++j) m = std::max(m, scale * x.at(row, j));
  double z = 0;
  for (std::size_t j = 0; j < x.dim(1); ++j) z += std::exp(scale * x.at(row, j) - m);
  return -(scale * x.at(row, col) - m - std::log(z));
}

}  // namespace

TEST(Superclasses, DefaultGivesTwentyFivePartition) {
  const auto emb = EmbeddingTable::pseudo(tax());
  const auto s = build_superclasses(tax(), emb, 5, 5, 42);
  EXPECT_EQ(s.size(), 25u);
  ASSERT_EQ(s.hoi_super.size(), tax().num_categories());
  for (std::size_t c = 0; c < tax().num_categories(); ++c) {
    const auto& p = tax().pair(c);
    EXPECT_LT(s.hoi_super[c], 25u);
    EXPECT_EQ(s.hoi_super[c], s.verb_cluster[p.verb] * 5 + s.object_cluster[p.object]);
  }
  // every verb and object cluster is populated
  EXPECT_EQ(std::set<std::size_t>(s.verb_cluster.begin(), s.verb_cluster.end()).size(), 5u);
  EXPECT_EQ(std::set<std::size_t>(s.object_cluster.begin(), s.object_cluster.end()).size(), 5u);
  const auto again = build_superclasses(tax(), emb, 5, 5, 42);
  EXPECT_EQ(again.hoi_super, s.hoi_super);
  EXPECT_EQ(again.verb_centroids, s.verb_centroids);
}

TEST(Superclasses, DegenerateClusterings) {
  const auto emb = EmbeddingTable::pseudo(tax());
  const auto all = build_superclasses(tax(), emb, tax().num_verbs(), tax().num_objects(), 1);
  EXPECT_EQ(std::set<std::size_t>(all.hoi_super.begin(), all.hoi_super.end()).size(), tax().num_categories());
  const auto one = build_superclasses(tax(), emb, 1, 1, 1);
  for (auto s : one.hoi_super) EXPECT_EQ(s, 0u);
  EXPECT_THROW(build_superclasses(tax(), emb, 0, 5, 1), ConfigError);
  EXPECT_THROW(build_superclasses(tax(), emb, 5, tax().num_objects() + 1, 1), ConfigError);
}

TEST(Superclasses, JsonExportCoversEveryCategory) {
  const auto emb = EmbeddingTable::pseudo(tax());
  const auto s = build_superclasses(tax(), emb, 5, 5, 42);
  const auto j = superclasses_to_json(tax(), s);
  EXPECT_EQ(j["superclasses"], 25);
  ASSERT_EQ(j["categories"].size(), tax().num_categories());
  EXPECT_EQ(j["categories"][7]["superclass"], s.hoi_super[7]);
}

TEST(KMeans, InertiaNeverIncreases) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 30 + rng() % 40, k = 2 + rng() % 6;
    const Tensor pts = random_matrix(rng, n, 3);
    const auto r = kmeans(pts.to_vector(), n, 3, k, t);
    ASSERT_FALSE(r.inertia.empty());
    for (std::size_t i = 1; i < r.inertia.size(); ++i) EXPECT_LE(r.inertia[i], r.inertia[i - 1] + 1e-12);
    std::set<std::size_t> used(r.assignment.begin(), r.assignment.end());
    EXPECT_EQ(used.size(), k);
    // each point sits with its nearest centroid
    for (std::size_t i = 0; i < n; ++i) {
      auto d2 = [&](std::size_t c) {
        double s = 0;
        for (std::size_t d = 0; d < 3; ++d) s += std::pow(pts.at(i, d) - r.centroids[c * 3 + d], 2);
        return s;
      };
      for (std::size_t c = 0; c < k; ++c) EXPECT_LE(d2(r.assignment[i]), d2(c) + 1e-12);
    }
  }
}

TEST(KMeans, SeparatedBlobsAreRecovered) {
  std::vector<double> pts;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 0.01);
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 10; ++i) pts.insert(pts.end(), {b * 10.0 + n(rng), n(rng)});
  const auto r = kmeans(pts, 30, 2, 3, 9);
  for (int b = 0; b < 3; ++b)
    for (int i = 1; i < 10; ++i) EXPECT_EQ(r.assignment[b * 10 + i], r.assignment[b * 10]);
  EXPECT_NE(r.assignment[0], r.assignment[10]);
  EXPECT_NE(r.assignment[10], r.assignment[20]);
}

TEST(MergeLoss, UniformLogitsGiveLn25) {
  EXPECT_NEAR(merge_loss(Tensor::zeros({3, 25}), {0, 7, 24}).item(), std::log(25.0), 1e-9);
}

TEST(MergeLoss, SaturatedLogitsVanish) {
  std::vector<double> v(2 * 25, -50.0);
  v[3] = 50;
  v[25 + 11] = 50;
  EXPECT_LT(merge_loss(Tensor({2, 25}, v), {3, 11}).item(), 1e-30);
  EXPECT_EQ(merge_loss(Tensor::zeros({0, 25}), {}).item(), 0.0);
}

TEST(MergeLoss, MatchesDirectEvaluationAndGradient) {
  std::mt19937_64 rng(5);
  const Tensor x = random_matrix(rng, 4, 25);
  const std::vector<std::size_t> y{3, 0, 24, 9};
  double direct = 0;
  for (std::size_t i = 0; i < 4; ++i) direct += neg_log_softmax(x, i, y[i]);
  EXPECT_NEAR(merge_loss(x, y).item(), direct / 4, 1e-12);
  EXPECT_LT(hoi::testing::gradcheck([&](const std::vector<Tensor>& in) { return merge_loss(in[0], y); }, {x}), 1e-4);
}

TEST(SplitLoss, UniformSimilaritiesGiveLn10) {
  // query orthogonal to all ten context rows
  std::vector<double> ctx(10 * 11, 0.0);
  for (std::size_t j = 0; j < 10; ++j) ctx[j * 11 + j] = 1.0;
  std::vector<double> q(11, 0.0);
  q[10] = 1.0;
  EXPECT_NEAR(split_loss(Tensor({1, 11}, q), Tensor({10, 11}, ctx), {4}, 0.07).item(), std::log(10.0), 1e-9);
}

TEST(SplitLoss, EmptyAndErrors) {
  EXPECT_EQ(split_loss(Tensor::zeros({0, 4}), Tensor::matrix({{1, 0, 0, 0}}), {}, 0.07).item(), 0.0);
  EXPECT_THROW(split_loss(Tensor::matrix({{1, 0}}), Tensor::matrix({{1, 0}}), {0}, 0.0), ConfigError);
}

TEST(SplitLoss, MatchesDirectEvaluationAndGradient) {
  std::mt19937_64 rng(7);
  const Tensor q = random_matrix(rng, 3, 6), t = random_matrix(rng, 10, 6);
  const std::vector<std::size_t> y{2, 9, 0};
  const double tau = 0.2;
  const Tensor cos = ops::matmul(ops::l2_normalize(q), ops::transpose(ops::l2_normalize(t)));
  double direct = 0;
  for (std::size_t i = 0; i < 3; ++i) direct += neg_log_softmax(cos, i, y[i], 1 / tau);
  EXPECT_NEAR(split_loss(q, t, y, tau).item(), direct / 3, 1e-12);
  EXPECT_LT(hoi::testing::gradcheck([&](const std::vector<Tensor>& in) { return split_loss(in[0], in[1], y, tau); },
                                    {q, t}),
            1e-4);
}

TEST(Selection, ArgmaxPairAndSingleQuery) {
  // similarities [0.9, 0.1, 0.8]
  const Tensor text = Tensor::matrix({{0.9, std::sqrt(1 - 0.81)}, {0.1, std::sqrt(1 - 0.01)}, {0.8, -0.6}});
  const Tensor q = Tensor::matrix({{1, 0}});
  const auto top = topk_similar(q, text, 2);
  EXPECT_EQ(std::set<std::size_t>(top[0].begin(), top[0].end()), (std::set<std::size_t>{0, 2}));
  const auto ctx = select_topk_categories(q, text, 2, 10, {2, 1});
  EXPECT_EQ(ctx.selected, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(ctx.eligible, std::vector<std::size_t>{0});  // matched category 1 is not selected
  EXPECT_EQ(ctx.targets, std::vector<std::size_t>{1});
}

TEST(Selection, MatchesHistogramOracle) {
  std::mt19937_64 rng(99);
  const auto emb = EmbeddingTable::pseudo(tax(), {.dim = 16});
  for (int t = 0; t < 50; ++t) {
    const Tensor q = random_matrix(rng, 16, 16);
    std::vector<std::size_t> matched{rng() % 60, rng() % 60, rng() % 60};
    const auto ctx = select_topk_categories(q, emb.hoi_features(), 2, 10, matched);

    std::vector<int> hist(60, 0);
    for (std::size_t i = 0; i < 16; ++i) {
      std::vector<std::pair<double, std::size_t>> s;
      for (std::size_t c = 0; c < 60; ++c) {
        double d = 0, nq = 0;
        for (std::size_t k = 0; k < 16; ++k) {
          d += q.at(i, k) * emb.hoi_features().at(c, k);
          nq += q.at(i, k) * q.at(i, k);
        }
        s.push_back({-d / std::sqrt(nq), c});  // text rows are unit length
      }
      std::sort(s.begin(), s.end());
      ++hist[s[0].second];
      ++hist[s[1].second];
    }
    std::vector<std::size_t> order;
    for (std::size_t c = 0; c < 60; ++c)
      if (hist[c]) order.push_back(c);
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return hist[a] != hist[b] ? hist[a] > hist[b] : a < b; });
    order.resize(std::min<std::size_t>(order.size(), 10));
    EXPECT_EQ(ctx.selected, order);
    ASSERT_EQ(ctx.features.shape(), (Shape{order.size(), 16}));
    for (std::size_t e = 0; e < ctx.eligible.size(); ++e)
      EXPECT_EQ(ctx.selected[ctx.targets[e]], matched[ctx.eligible[e]]);
    for (std::size_t i = 0; i < matched.size(); ++i) {
      const bool in = std::find(order.begin(), order.end(), matched[i]) != order.end();
      EXPECT_EQ(in, std::find(ctx.eligible.begin(), ctx.eligible.end(), i) != ctx.eligible.end());
    }
  }
}
