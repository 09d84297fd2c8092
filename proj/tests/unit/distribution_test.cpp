#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "bcensus/distribution.hpp"
#include "bcensus/errors.hpp"
#include "oracles.hpp"

namespace bcensus {
namespace {

TEST(CounterRngTest, SameSeedSameStream) {
  CounterRng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
  }
}

TEST(CounterRngTest, BelowStaysInRange) {
  CounterRng rng(7);
  for (int i = 0; i < 10000; ++i) {
    EXPECT_LT(rng.below(13), 13u);
    const double u = rng.uniform01();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(DistributionTest, RejectsBadEntries) {
  EXPECT_THROW(DiscreteDistribution::from_probabilities({}), InvalidArgument);
  EXPECT_THROW(DiscreteDistribution::from_probabilities({0.5, -0.1, 0.6}), InvalidArgument);
  EXPECT_THROW(DiscreteDistribution::from_probabilities({0.5, NAN}), InvalidArgument);
  EXPECT_THROW(DiscreteDistribution::from_probabilities({0.5, 0.6}), InvalidArgument);
  EXPECT_THROW(DiscreteDistribution::from_probabilities({0.0, 0.0}), InvalidArgument);
}

TEST(DistributionTest, RenormalizesWithinTolerance) {
  const auto d = DiscreteDistribution::from_probabilities({0.5 + 4e-10, 0.5});
  double sum = 0.0;
  for (const double p : d.probs()) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-15);
}

TEST(DistributionTest, SupportIgnoresZeroMass) {
  const auto d = DiscreteDistribution::from_probabilities({0.5, 0.0, 0.5});
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.support_size(), 2u);
  EXPECT_FALSE(d.is_uniform());
}

TEST(DistributionTest, MassPlusUniformWithFullHeadIsUniform) {
  const auto d = make_mass_plus_uniform(1.0, 5, 0);
  EXPECT_TRUE(d.is_uniform());
  EXPECT_EQ(d.support_size(), 5u);
  EXPECT_THROW(make_mass_plus_uniform(0.9, 5, 0), InvalidArgument);
  EXPECT_THROW(make_mass_plus_uniform(1.5, 5, 5), InvalidArgument);
}

TEST(DistributionTest, MassPlusUniformSplitsMass) {
  const auto d = make_mass_plus_uniform(0.8, 4, 10);
  EXPECT_EQ(d.size(), 14u);
  EXPECT_NEAR(d[0], 0.2, 1e-15);
  EXPECT_NEAR(d[13], 0.02, 1e-15);
}

TEST(DistributionTest, ParsesTextWithComments) {
  std::istringstream in("# two atoms\n0.25\n\n  # indented comment\n0.75\n");
  const auto d = parse_distribution_text(in);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_DOUBLE_EQ(d[1], 0.75);
  std::istringstream bad("0.5\nhalf\n");
  EXPECT_THROW(parse_distribution_text(bad), InvalidInput);
}

TEST(AliasSamplerTest, FrequenciesMatchProbabilities) {
  const auto d = DiscreteDistribution::from_probabilities({0.1, 0.2, 0.3, 0.4});
  AliasSampler sampler(d);
  CounterRng rng(99);
  std::vector<int> counts(4, 0);
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) ++counts[sampler.draw(rng)];
  for (std::size_t a = 0; a < 4; ++a) {
    const double expected = d[a] * draws;
    EXPECT_NEAR(counts[a], expected, 5.0 * std::sqrt(expected));
  }
}

TEST(AliasSamplerTest, NeverDrawsZeroMassAtoms) {
  const auto d = make_mass_plus_uniform(1.0, 3, 0);
  const auto with_tail = DiscreteDistribution::from_probabilities({0.5, 0.0, 0.5, 0.0});
  AliasSampler sampler(with_tail);
  CounterRng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const auto a = sampler.draw(rng);
    EXPECT_TRUE(a == 0 || a == 2);
  }
  EXPECT_EQ(d.support_size(), 3u);
}

TEST(SampleBatchTest, PureFunctionOfSeed) {
  const auto d = make_uniform(1000);
  EXPECT_EQ(sample_batch(d, 50, 5), sample_batch(d, 50, 5));
  EXPECT_NE(sample_batch(d, 50, 5), sample_batch(d, 50, 6));
}

TEST(HasRepeatTest, Basics) {
  EXPECT_FALSE(has_repeat(std::vector<std::uint32_t>{}));
  EXPECT_FALSE(has_repeat(std::vector<std::uint32_t>{1, 2, 3}));
  EXPECT_TRUE(has_repeat(std::vector<std::uint32_t>{1, 2, 1}));
}

TEST(ExactCollisionTest, BirthdayProductOracle) {
  for (const std::size_t n : {365u, 366u}) {
    for (std::size_t m = 1; m <= 60; ++m) {
      EXPECT_NEAR(exact_collision_probability(make_uniform(n), m),
                  static_cast<double>(testing::product_collision_probability(n, m)), 1e-12)
          << "n=" << n << " m=" << m;
    }
  }
  EXPECT_NEAR(exact_collision_probability(make_uniform(365), 23), 0.507297, 1e-6);
}

TEST(ExactCollisionTest, TrivialCases) {
  EXPECT_EQ(exact_collision_probability(make_uniform(5), 6), 1.0);
  EXPECT_EQ(exact_collision_probability(make_mass_plus_uniform(1.0, 5, 0), 6), 1.0);
  EXPECT_EQ(exact_collision_probability(make_uniform(5), 1), 0.0);
  EXPECT_THROW(exact_collision_probability(make_uniform(5), 0), InvalidArgument);
  const auto point = DiscreteDistribution::from_probabilities({0.0, 1.0});
  EXPECT_EQ(exact_collision_probability(point, 2), 1.0);
}

TEST(ExactCollisionTest, DpMatchesEnumeration) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rep % 5;
    const std::size_t m = 2 + rep % 4;
    std::vector<double> p(n);
    double s = 0;
    for (auto& x : p) s += (x = u(rng));
    for (auto& x : p) x /= s;
    EXPECT_NEAR(dp_collision_probability(p, m), static_cast<double>(testing::enumerate_collision_probability(p, m)),
                1e-12);
  }
}

TEST(ExactCollisionTest, DpAgreesWithProductOnLargeUniform) {
  const std::size_t n = 160000;
  const std::vector<double> p(n, 1.0 / static_cast<double>(n));
  for (const std::size_t m : {2u, 100u, 471u, 472u, 2000u}) {
    EXPECT_NEAR(dp_collision_probability(p, m), uniform_collision_probability(n, m), 1e-10) << m;
  }
}

TEST(ExactCollisionTest, DpStaysFiniteOnSkewedMass) {
  std::vector<double> p(2000);
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::pow(0.99, static_cast<double>(i)));
  for (auto& x : p) x /= s;
  double last = 0.0;
  for (std::size_t m = 2; m <= 300; m += 7) {
    const double g = dp_collision_probability(p, m);
    EXPECT_TRUE(std::isfinite(g));
    EXPECT_GE(g, last);
    EXPECT_LE(g, 1.0);
    last = g;
  }
}

TEST(ExactCollisionTest, CostGuardOnlyForDp) {
  EXPECT_THROW(exact_collision_probability(make_mass_plus_uniform(0.6, 100000, 100000), 10000), ResourceLimit);
  EXPECT_NO_THROW(exact_collision_probability(make_uniform(10000000), 1000));
}

TEST(WilsonTest, KnownInterval) {
  const auto e = wilson_estimate(5, 10);
  EXPECT_DOUBLE_EQ(e.point, 0.5);
  EXPECT_NEAR(e.ci_low, 0.236593, 1e-6);
  EXPECT_NEAR(e.ci_high, 0.763407, 1e-6);
  const auto zero = wilson_estimate(0, 100);
  EXPECT_EQ(zero.ci_low, 0.0);
  EXPECT_GT(zero.ci_high, 0.0);
  EXPECT_THROW(wilson_estimate(0, 0), InvalidArgument);
  EXPECT_THROW(wilson_estimate(3, 2), InvalidArgument);
}

TEST(MonteCarloTest, TrialsAreSampleBatchesWithDerivedSeeds) {
  const auto d = make_mass_plus_uniform(0.7, 30, 200);
  const std::size_t m = 8;
  const std::uint64_t seed = 1234;
  std::uint64_t collided = 0;
  for (std::uint64_t t = 0; t < 500; ++t) collided += has_repeat(sample_batch(d, m, trial_seed(seed, t)));
  EXPECT_EQ(monte_carlo_collision(d, m, 500, seed, 1).collided, collided);
}

TEST(MonteCarloTest, IndependentOfThreadCount) {
  const auto d = make_uniform(5000);
  const auto one = monte_carlo_collision(d, 80, 3000, 9, 1);
  for (const unsigned t : {2u, 4u, 8u}) EXPECT_EQ(monte_carlo_collision(d, 80, 3000, 9, t).collided, one.collided);
}

TEST(MonteCarloTest, CoversExactValue) {
  const auto d = make_mass_plus_uniform(0.9, 200, 5000);
  const double exact = exact_collision_probability(d, 20);
  const auto est = monte_carlo_collision(d, 20, 20000, 77, 0);
  EXPECT_LE(est.ci_low, exact);
  EXPECT_GE(est.ci_high, exact);
}

TEST(BetaTest, UniformAndPointMass) {
  EXPECT_EQ(beta(make_uniform(12345)), 12345.0);
  EXPECT_DOUBLE_EQ(beta(DiscreteDistribution::from_probabilities({0.0, 1.0})), 1.0);
  EXPECT_NEAR(beta(DiscreteDistribution::from_probabilities({0.5, 0.25, 0.25})), 1.0 / 0.375, 1e-12);
}

}  // namespace
}  // namespace bcensus
