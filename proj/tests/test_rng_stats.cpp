#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "gmcorr/parallel.hpp"
#include "gmcorr/rng.hpp"
#include "gmcorr/stats.hpp"

using namespace gmcorr;

// Known-answer vectors of the reference Philox4x32-10.
TEST(Philox, KnownAnswers) {
  using Block = std::array<std::uint32_t, 4>;
  EXPECT_EQ(Philox4x32(0, 0).generate(0), (Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32(~0ull, ~0ull).generate(~0ull), (Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32(0x299f31d0a4093822ull, 0x0370734413198a2eull).generate(0x85a308d3243f6a88ull),
            (Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, StreamsAreReproducibleAndDistinct) {
  Philox4x32 a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    seen.insert(x);
    seen.insert(c());
    seen.insert(d());
  }
  EXPECT_EQ(seen.size(), 3000u);
}

TEST(TrajectoryRng, UniformMoments) {
  TrajectoryRng rng(1, 2);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 5 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 2e-3);
}

TEST(TrajectoryRng, UniformPassesKs) {
  TrajectoryRng rng(99, 0);
  std::vector<double> v(20000);
  for (auto& x : v) x = rng.uniform();
  const auto ks = ks_test(v, [](double x) { return x; });
  EXPECT_GT(ks.p_value, 0.01);
}

TEST(TrajectoryRng, NormalPassesKs) {
  TrajectoryRng rng(5, 3);
  std::vector<double> v(20000);
  for (auto& x : v) x = rng.normal();
  const auto ks = ks_test(v, [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); });
  EXPECT_GT(ks.p_value, 0.01);
}

TEST(Stats, PairwiseSumIsOrderFixed) {
  std::vector<double> v(1001);
  std::iota(v.begin(), v.end(), 0.0);
  EXPECT_EQ(pairwise_sum(v), 500500.0);
  EXPECT_EQ(pairwise_sum(std::span<const double>{}), 0.0);
}

TEST(Stats, MeanEstimate) {
  const std::vector<double> one{3.0};
  const auto e1 = estimate_mean(one);
  EXPECT_EQ(e1.mean, 3.0);
  EXPECT_FALSE(e1.se_defined());
  EXPECT_TRUE(std::isnan(e1.standard_error));

  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto e = estimate_mean(v);
  EXPECT_DOUBLE_EQ(e.mean, 2.5);
  EXPECT_NEAR(e.standard_error, std::sqrt((1.25 * 4.0 / 3.0) / 4.0), 1e-15);
}

TEST(Stats, KolmogorovSurvivalKnownPoints) {
  // Tabulated critical values of the Kolmogorov distribution.
  EXPECT_NEAR(kolmogorov_survival(1.3581), 0.05, 5e-4);
  EXPECT_NEAR(kolmogorov_survival(1.6276), 0.01, 5e-4);
  EXPECT_NEAR(kolmogorov_survival(1.2238), 0.10, 5e-4);
}

TEST(Stats, KsRejectsWrongDistribution) {
  std::mt19937_64 gen(1);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> v(5000);
  for (auto& x : v) x = ex(gen);
  EXPECT_GT(ks_test(v, [](double x) { return 1.0 - std::exp(-x); }).p_value, 0.01);
  EXPECT_LT(ks_test(v, [](double x) { return 1.0 - std::exp(-1.2 * x); }).p_value, 0.01);
}

TEST(ParallelFor, CoversAllIndices) {
  for (unsigned threads : {1u, 3u, 8u}) {
    std::vector<int> hit(257, 0);
    parallel_for(hit.size(), threads, [&](std::size_t i) { hit[i] += 1; });
    for (int h : hit) EXPECT_EQ(h, 1);
  }
}

TEST(ParallelFor, ReportsLowestFailingIndex) {
  try {
    parallel_for(100, 1, [](std::size_t i) {
      if (i == 17 || i == 60) throw NumericalError("boom");
    });
    FAIL() << "expected failure";
  } catch (const TrajectoryFailure& e) {
    EXPECT_EQ(e.index(), 17u);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}
