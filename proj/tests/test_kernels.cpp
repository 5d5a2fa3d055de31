#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "hoi/kernels.hpp"

namespace hoi::kernels {
namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

TEST(Kernels, GemmParallelMatchesSerialBitForBit) {
  std::mt19937_64 rng(7);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const GemmShape s{37, 29, 61, ta, tb};
      auto a = random_values(s.m * s.k, rng);
      auto b = random_values(s.k * s.n, rng);
      auto c0 = random_values(s.m * s.n, rng);
      auto c1 = c0;
      serial::gemm(s, a, b, c0, true);
      parallel::gemm(s, a, b, c1, true);
      EXPECT_EQ(c0, c1) << "trans_a=" << ta << " trans_b=" << tb;
    }
}

TEST(Kernels, GemmAgainstHandProduct) {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};  // 2x3
  const std::vector<double> b{1, 0, 0, 1, 1, 1};  // 3x2
  std::vector<double> c(4);
  parallel::gemm({2, 2, 3, false, false}, a, b, c, false);
  EXPECT_EQ(c, (std::vector<double>{4, 5, 10, 11}));
}

TEST(Kernels, AttentionParallelMatchesSerial) {
  std::mt19937_64 rng(11);
  const AttentionShape s{24, 70, 16, 12};
  auto q = random_values(s.queries * s.key_dim, rng);
  auto k = random_values(s.keys * s.key_dim, rng);
  auto v = random_values(s.keys * s.value_dim, rng);
  std::vector<double> mask(s.queries * s.keys, 0.0);
  std::bernoulli_distribution drop(0.3);
  for (std::size_t i = 0; i < s.queries; ++i)
    for (std::size_t j = 1; j < s.keys; ++j)
      if (drop(rng)) mask[i * s.keys + j] = kMasked;

  std::vector<double> p0(s.queries * s.keys), p1(p0.size()), o0(s.queries * s.value_dim), o1(o0.size());
  serial::attention_forward(s, q, k, v, mask, 0.25, p0, o0);
  parallel::attention_forward(s, q, k, v, mask, 0.25, p1, o1);
  EXPECT_EQ(p0, p1);
  EXPECT_EQ(o0, o1);

  auto dout = random_values(o0.size(), rng);
  std::vector<double> dq0(q.size()), dk0(k.size()), dv0(v.size());
  auto dq1 = dq0, dk1 = dk0, dv1 = dv0;
  serial::attention_backward(s, q, k, v, p0, dout, 0.25, dq0, dk0, dv0);
  parallel::attention_backward(s, q, k, v, p1, dout, 0.25, dq1, dk1, dv1);
  EXPECT_EQ(dq0, dq1);
  EXPECT_EQ(dk0, dk1);
  EXPECT_EQ(dv0, dv1);
}

TEST(Kernels, MaskedKeysGetZeroWeight) {
  const AttentionShape s{1, 3, 1, 1};
  const std::vector<double> q{1}, k{1, 2, 3}, v{10, 20, 30};
  const std::vector<double> mask{0, kMasked, 0};
  std::vector<double> p(3), o(1);
  serial::attention_forward(s, q, k, v, mask, 1.0, p, o);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_NEAR(p[0] + p[2], 1.0, 1e-15);
}

}  // namespace
}  // namespace hoi::kernels
