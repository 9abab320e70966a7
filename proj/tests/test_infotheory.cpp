#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pcvae/infotheory.hpp"

using namespace pcvae;
using namespace pcvae::info;

namespace {

const VarSet X1{Variable::x1}, X2{Variable::x2}, Y{Variable::y}, X12{Variable::x1, Variable::x2};

JointDistribution to_joint(const oracle::Joint3& j) { return JointDistribution({j.a, j.b, j.c}, j.p); }

oracle::Joint3 to_oracle(const JointDistribution& j) {
  return {j.cards()[0], j.cards()[1], j.cards()[2], j.pmf()};
}

// Stack x1 | x2 columns of standard normals with the given correlation
// between matched columns.
Tensor correlated_pairs(std::size_t n, double rho, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.gaussian(), b = rng.gaussian();
    t.at(i, 0) = a;
    t.at(i, 1) = rho * a + std::sqrt(1 - rho * rho) * b;
  }
  return t;
}

GaussianProjections random_projections(std::size_t d, std::size_t d1, std::size_t d2, std::size_t dy,
                                       std::uint64_t seed) {
  Rng rng(seed);
  return {gaussian_matrix(d, d1, rng), gaussian_matrix(d, d2, rng), gaussian_matrix(d, dy, rng)};
}

}  // namespace

TEST(JointDistribution, Validation) {
  EXPECT_THROW(JointDistribution({1, 1, 2}, {0.5, 0.6}), DistributionError);
  EXPECT_THROW(JointDistribution({1, 1, 2}, {1.5, -0.5}), DistributionError);
  EXPECT_THROW(JointDistribution({1, 1, 2}, {1.0}), DistributionError);
  EXPECT_NO_THROW(JointDistribution({1, 1, 2}, {0.25, 0.75}));
}

TEST(JointDistribution, ParseGrammar) {
  const auto j = parse_joint("# xor\n2 2 2\n0 0 0 0.25\n0 1 1 0.25\n\n1 0 1 0.25\n1 1 0 0.25  # last\n");
  EXPECT_EQ(j.pmf(), xor_joint().pmf());
  EXPECT_THROW(parse_joint("2 2 2\n0 0 0 0.5\n"), DistributionError);
  EXPECT_THROW(parse_joint("2 2 2\n0 0 0 0.5\n0 0 0 0.5\n"), FormatError);
  EXPECT_THROW(parse_joint("2 2 2\n0 0 5 1.0\n"), FormatError);
  EXPECT_THROW(parse_joint("2 2\n"), FormatError);
}

TEST(Entropy, UniformPointAndBiased) {
  const std::vector<double> u{0.5, 0.5}, pt{0, 1, 0}, b{0.25, 0.75};
  EXPECT_NEAR(entropy(u), 1.0, 1e-15);
  EXPECT_EQ(entropy(pt), 0.0);
  EXPECT_NEAR(entropy(b), -(0.25 * std::log2(0.25) + 0.75 * std::log2(0.75)), 1e-15);
  EXPECT_NEAR(entropy(b), 0.8112781244591328, 1e-15);
  const std::vector<double> neg{1.5, -0.5};
  EXPECT_THROW(entropy(neg), DistributionError);
}

TEST(MutualInfo, IndependentAndCopy) {
  EXPECT_NEAR(mutual_info(independent_joint(), X1, Y), 0.0, 1e-15);
  EXPECT_NEAR(mutual_info(copy_joint(), X1, Y), 1.0, 1e-15);
}

TEST(MutualInfo, OverlappingGroupsIsUsageError) {
  EXPECT_THROW(mutual_info(xor_joint(), X12, X1), UsageError);
  EXPECT_THROW(mutual_info(xor_joint(), {}, X1), UsageError);
  EXPECT_THROW(cond_mutual_info(xor_joint(), X1, Y, Y), UsageError);
}

TEST(MutualInfo, MatchesBruteForceOnRandomJoints) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 50; ++t) {
    const auto o = oracle::random_joint(gen, 4, t % 2 == 0);
    const auto j = to_joint(o);
    EXPECT_NEAR(mutual_info(j, X1, Y), oracle::mi_x1_y(o), 1e-12);
    EXPECT_NEAR(mutual_info(j, X2, Y), oracle::mi_x2_y(o), 1e-12);
    EXPECT_NEAR(mutual_info(j, X1, X2), oracle::mi_x1_x2(o), 1e-12);
    EXPECT_NEAR(mutual_info(j, X12, Y), oracle::mi_pair_y(o), 1e-12);
    EXPECT_NEAR(cond_mutual_info(j, X1, Y, X2), oracle::cmi_x1_y_given_x2(o), 1e-12);
    EXPECT_NEAR(cond_mutual_info(j, X2, Y, X1), oracle::cmi_x2_y_given_x1(o), 1e-12);
  }
}

TEST(MutualInfo, ChainRuleOnRandomTwoByTwoByTwo) {
  std::mt19937_64 gen(2);
  for (int t = 0; t < 20; ++t) {
    auto o = oracle::random_joint(gen, 2);
    const auto j = to_joint(o);
    EXPECT_NEAR(mutual_info(j, X12, Y), mutual_info(j, X2, Y) + cond_mutual_info(j, X1, Y, X2), 1e-12);
  }
}

TEST(MutualInfo, ZeroOnConstructedFactorizedJoints) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> pa(3), pb(2), pc(4);
    double sa = 0, sb = 0, sc = 0;
    for (auto& v : pa) sa += (v = u(gen));
    for (auto& v : pb) sb += (v = u(gen));
    for (auto& v : pc) sc += (v = u(gen));
    std::vector<double> p;
    for (double a : pa)
      for (double b : pb)
        for (double c : pc) p.push_back(a / sa * b / sb * c / sc);
    const JointDistribution j({3, 2, 4}, p, 1e-12);
    EXPECT_NEAR(mutual_info(j, X12, Y), 0.0, 1e-12);
    EXPECT_NEAR(mutual_info(j, X1, X2), 0.0, 1e-12);
    EXPECT_NEAR(cond_mutual_info(j, X1, Y, X2), 0.0, 1e-12);
  }
}

TEST(CondMutualInfo, XorIndependentCopy) {
  EXPECT_NEAR(cond_mutual_info(xor_joint(), X1, Y, X2), 1.0, 1e-15);
  EXPECT_NEAR(cond_mutual_info(independent_joint(), X1, Y, X2), 0.0, 1e-15);
  EXPECT_NEAR(cond_mutual_info(copy_joint(), X1, Y, X2), 0.0, 1e-15);
  // Brute force over the eight triples.
  EXPECT_NEAR(oracle::cmi_x1_y_given_x2(to_oracle(xor_joint())), 1.0, 1e-15);
  EXPECT_NEAR(oracle::cmi_x1_y_given_x2(to_oracle(copy_joint())), 0.0, 1e-15);
}

TEST(CondMutualInfo, ZeroProbabilityConditioningContributesNothing) {
  // x2 = 1 never occurs.
  std::vector<double> p(8, 0.0);
  p[(0 * 2 + 0) * 2 + 0] = 0.5;
  p[(1 * 2 + 0) * 2 + 1] = 0.5;
  const JointDistribution j({2, 2, 2}, p);
  EXPECT_NEAR(cond_mutual_info(j, X1, Y, X2), 1.0, 1e-15);
}

TEST(Pid, XorBothRoutes) {
  const PidResult r = pid_decompose(xor_joint());
  EXPECT_NEAR(r.unique1, 1.0, 1e-12);
  EXPECT_NEAR(r.unique2, 1.0, 1e-12);
  EXPECT_NEAR(r.redundancy, 0.0, 1e-12);
  EXPECT_NEAR(r.synergy, -1.0, 1e-12);
  EXPECT_NEAR(r.total, 1.0, 1e-12);
  EXPECT_NEAR(r.interaction_synergy_minus_redundancy, -1.0, 1e-12);
  EXPECT_NEAR(r.interaction, 1.0, 1e-12);
}

TEST(Pid, Copy) {
  const PidResult r = pid_decompose(copy_joint());
  EXPECT_NEAR(r.redundancy, 1.0, 1e-12);
  EXPECT_NEAR(r.unique1, 0.0, 1e-12);
  EXPECT_NEAR(r.unique2, 0.0, 1e-12);
  EXPECT_NEAR(r.synergy, 0.0, 1e-12);
  EXPECT_NEAR(r.interaction, -1.0, 1e-12);
}

TEST(Pid, IndependentIsAllZero) {
  const PidResult r = pid_decompose(independent_joint());
  for (double v : {r.unique1, r.unique2, r.redundancy, r.synergy, r.total, r.interaction,
                   r.interaction_synergy_minus_redundancy})
    EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Pid, EachIdentityAgainstItsOwnDefinition) {
  std::mt19937_64 gen(4);
  for (int t = 0; t < 100; ++t) {
    const auto o = oracle::random_joint(gen, 4, t % 3 == 0);
    const PidResult r = pid_decompose(to_joint(o));
    EXPECT_NEAR(r.total, r.unique1 + r.unique2 + r.redundancy + r.synergy, 1e-9);
    EXPECT_NEAR(r.interaction_synergy_minus_redundancy, r.synergy - r.redundancy, 1e-9);
    EXPECT_NEAR(r.interaction, oracle::mi_pair_y(o) - oracle::mi_x1_y(o) - oracle::mi_x2_y(o), 1e-9);
    EXPECT_NEAR(r.unique1, oracle::cmi_x1_y_given_x2(o), 1e-12);
    EXPECT_NEAR(r.redundancy, oracle::mi_x1_x2(o), 1e-12);
  }
}

TEST(InteractionInfo, ReferenceCases) {
  EXPECT_NEAR(interaction_info(xor_joint()), 1.0, 1e-12);
  EXPECT_NEAR(interaction_info(copy_joint()), -1.0, 1e-12);
  EXPECT_NEAR(interaction_info(independent_joint()), 0.0, 1e-12);
}

TEST(InteractionInfo, RoutesAgreeOnRandomJoints) {
  std::mt19937_64 gen(5);
  for (int t = 0; t < 100; ++t) {
    const auto r = interaction_routes(to_joint(oracle::random_joint(gen)));
    EXPECT_NEAR(r.mi_difference, r.conditional, 1e-9);
  }
}

TEST(Quantize, TwoPointGridIsExact) {
  // x1 in {0,1}, x2 = 0 always, y = x1.
  SampleBatch b{Tensor({4, 1}, std::vector<double>{0, 1, 1, 1}), Tensor({4, 1}, 0.0),
                Tensor({4, 1}, std::vector<double>{0, 1, 1, 1})};
  const auto first = [](Variable, std::span<const double> v) { return v[0]; };
  const JointDistribution j = quantize(b, 2, first);
  EXPECT_EQ(j.cards(), (std::array<std::size_t, 3>{2, 2, 2}));
  EXPECT_NEAR(j.p(0, 0, 0), 0.25, 1e-15);
  EXPECT_NEAR(j.p(1, 0, 1), 0.75, 1e-15);
  EXPECT_EQ(j.p(0, 0, 1), 0.0);
}

TEST(Quantize, IndependentUniformsHaveSmallPluginMi) {
  Rng rng(6);
  const std::size_t n = 10000;
  SampleBatch b{Tensor({n, 1}), Tensor({n, 1}), Tensor({n, 1})};
  for (std::size_t i = 0; i < n; ++i) {
    b.x1[i] = rng.uniform();
    b.x2[i] = rng.uniform();
    b.y[i] = rng.uniform();
  }
  const JointDistribution j = quantize(b, 16, projection_summarizer(1, 1, 1, 7));
  EXPECT_LT(mutual_info(j, X1, Y), 0.05);
}

TEST(Quantize, CopyReachesThreeBits) {
  Rng rng(8);
  const std::size_t n = 10000;
  SampleBatch b{Tensor({n, 1}), Tensor({n, 1}), Tensor({n, 1})};
  for (std::size_t i = 0; i < n; ++i) {
    b.x1[i] = rng.uniform();
    b.x2[i] = rng.uniform();
    b.y[i] = b.x1[i];
  }
  const auto first = [](Variable, std::span<const double> v) { return v[0]; };
  EXPECT_GE(mutual_info(quantize(b, 16, first), X1, Y), 3.0);
}

TEST(Quantize, ConstantVariableCollapsesToOneBin) {
  SampleBatch b{Tensor({3, 1}, 2.0), Tensor({3, 1}, std::vector<double>{0, 1, 2}), Tensor({3, 1}, 1.0)};
  const auto first = [](Variable, std::span<const double> v) { return v[0]; };
  const JointDistribution j = quantize(b, 4, first);
  EXPECT_NEAR(entropy(j.marginal(X1)), 0.0, 1e-15);
  EXPECT_THROW(quantize(b, 1, first), UsageError);
}

TEST(GaussianMi, AnalyticValueCrossCheckedByQuadrature) {
  const double closed = -0.5 * std::log(1 - 0.25);
  EXPECT_NEAR(closed, 0.143841, 1e-6);
  EXPECT_NEAR(oracle::bivariate_normal_mi_quadrature(0.5), closed, 1e-7);
}

TEST(GaussianMi, DiagonalAndExactCorrelation) {
  const Tensor diag({3, 3}, std::vector<double>{2, 0, 0, 0, 1, 0, 0, 0, 5});
  EXPECT_NEAR(gaussian_mi(diag, {0, 1}, {2}), 0.0, 1e-15);
  const Tensor rho({2, 2}, std::vector<double>{1, 0.5, 0.5, 1});
  EXPECT_NEAR(gaussian_mi(rho, {0}, {1}), -0.5 * std::log(0.75), 1e-14);
  const Tensor zero({2, 2}, std::vector<double>{1, 0, 0, 1});
  EXPECT_EQ(gaussian_mi(zero, {0}, {1}), 0.0);
}

TEST(GaussianMi, SampledRhoHalfWithinFivePercent) {
  const Tensor data = correlated_pairs(100000, 0.5, 9);
  const double mi = gaussian_mi(sample_covariance(data, 0.0), {0}, {1});
  EXPECT_NEAR(mi, 0.143841, 0.05 * 0.143841);
}

TEST(GaussianMi, InvariantUnderSeparateLinearMaps) {
  Rng rng(10);
  const Tensor base = gaussian_matrix(200, 4, rng);
  Tensor data = base;
  for (std::size_t i = 0; i < 200; ++i) data.at(i, 2) += 0.7 * base.at(i, 0), data.at(i, 3) -= 0.4 * base.at(i, 1);
  const Tensor cov = sample_covariance(data, 0.0);
  const double before = gaussian_mi(cov, {0, 1}, {2, 3});
  // Random invertible 2x2 maps applied to the A block and the B block.
  Tensor m({4, 4}, 0.0);
  for (std::size_t blk = 0; blk < 2; ++blk) {
    double a, b, c, d;
    do {
      a = rng.gaussian(), b = rng.gaussian(), c = rng.gaussian(), d = rng.gaussian();
    } while (std::abs(a * d - b * c) < 0.2);
    m.at(2 * blk, 2 * blk) = a, m.at(2 * blk, 2 * blk + 1) = b;
    m.at(2 * blk + 1, 2 * blk) = c, m.at(2 * blk + 1, 2 * blk + 1) = d;
  }
  Tensor mt({4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) mt.at(i, j) = m.at(j, i);
  const Tensor mapped = ad::linalg::matmul(ad::linalg::matmul(m, cov), mt);
  EXPECT_NEAR(gaussian_mi(mapped, {0, 1}, {2, 3}), before, 1e-9);
}

TEST(GaussianMi, NonSpdIsNumericError) {
  const Tensor bad({2, 2}, std::vector<double>{1, 2, 2, 1});
  EXPECT_THROW(gaussian_mi(bad, {0}, {1}), NumericError);
}

TEST(GaussianMi, GraphVersionMatchesDense) {
  const Tensor cov = sample_covariance(correlated_pairs(500, 0.3, 11), 1e-6);
  ad::Graph g;
  const ad::Var v = gaussian_mi(g, g.constant(cov), {0}, {1});
  EXPECT_NEAR(g.value(v)[0], gaussian_mi(cov, {0}, {1}), 1e-14);
}

TEST(InteractionInfoGaussian, IndependentNoiseNearZero) {
  Rng rng(12);
  const std::size_t n = 4000, d = 3;
  SampleBatch b{gaussian_matrix(n, 6, rng), gaussian_matrix(n, 5, rng), gaussian_matrix(n, 7, rng)};
  const auto proj = random_projections(d, 6, 5, 7, 13);
  EXPECT_NEAR(interaction_info_gaussian(b, proj, 1e-6), 0.0, 0.05);
}

TEST(InteractionInfoGaussian, RedundantCopyMatchesNegativeMi) {
  // x2 = x1 and y = x1 with shared projections: II = -I(x1; x2) of the
  // projected summaries, which is large and negative.
  Rng rng(14);
  const std::size_t n = 2000, d = 2;
  const Tensor x = gaussian_matrix(n, 6, rng);
  Tensor x2 = x;
  Tensor noise = gaussian_matrix(n, 6, rng);
  for (std::size_t i = 0; i < x2.size(); ++i) x2[i] += 0.5 * noise[i];
  Rng prng(15);
  const Tensor p = gaussian_matrix(d, 6, prng);
  const GaussianProjections proj{p, p, p};
  const double ii = interaction_info_gaussian(SampleBatch{x, x2, x}, proj, 1e-6);
  // Oracle: MI between the projected x1 and x2 from their joint covariance.
  Tensor stacked({n, 2 * d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      double a = 0, c = 0;
      for (std::size_t j = 0; j < 6; ++j) a += p.at(k, j) * x.at(i, j), c += p.at(k, j) * x2.at(i, j);
      stacked.at(i, k) = a;
      stacked.at(i, d + k) = c;
    }
  const double mi12 = gaussian_mi(sample_covariance(stacked, 1e-6), {0, 1}, {2, 3});
  EXPECT_LT(ii, 0.0);
  EXPECT_NEAR(ii, -mi12, 0.1);
}

TEST(InteractionInfoGaussian, GradientThroughY) {
  Rng rng(16);
  const std::size_t n = 20, d = 2;
  const Tensor x1 = gaussian_matrix(n, 4, rng), x2 = gaussian_matrix(n, 3, rng);
  Tensor y0 = gaussian_matrix(n, 4, rng);
  for (std::size_t i = 0; i < y0.size(); ++i) y0[i] = 0.5 * y0[i] + x1[i];
  const auto proj = random_projections(d, 4, 3, 4, 17);
  auto f = [&](ad::Graph& g, ad::Var y) { return interaction_info_gaussian(g, x1, x2, y, proj, 1e-6); };
  EXPECT_LT(ad::grad_check(f, y0, 1e-5), 1e-6);
}

TEST(InteractionInfoGaussian, SmallBatchIsNumericError) {
  Rng rng(18);
  const std::size_t d = 3;
  const auto proj = random_projections(d, 4, 4, 4, 19);
  SampleBatch b{gaussian_matrix(3 * d + 2, 4, rng), gaussian_matrix(3 * d + 2, 4, rng),
                gaussian_matrix(3 * d + 2, 4, rng)};
  EXPECT_THROW(interaction_info_gaussian(b, proj, 1e-6), NumericError);
}
