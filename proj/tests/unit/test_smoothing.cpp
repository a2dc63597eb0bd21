#include <gtest/gtest.h>

#include <random>

#include "gfts/error.hpp"
#include "gfts/smoothing.hpp"
#include "test_util.hpp"

using namespace gfts;
using gfts::test::load_fixture;
using gfts::test::to_vector;

namespace {

const AgeGrid kAges = AgeGrid::canonical();

SmoothConfig fixed_lambda(double lambda) {
  SmoothConfig c;
  c.lambda = lambda;
  return c;
}

}  // namespace

TEST(Bspline, PartitionOfUnityAndShape) {
  Eigen::VectorXd x(41);
  for (int i = 0; i < 41; ++i) x(i) = 60 + i;
  const Eigen::MatrixXd b = bspline_design(x, 15);
  EXPECT_EQ(b.rows(), 41);
  EXPECT_EQ(b.cols(), 19);
  EXPECT_LT((b.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(DifferenceMatrix, SecondOrder) {
  const Eigen::MatrixXd d = difference_matrix(4, 2);
  Eigen::MatrixXd expected(2, 4);
  expected << 1, -2, 1, 0, 0, 1, -2, 1;
  EXPECT_EQ(d, expected);
}

TEST(DeathWeights, ZeroCountsLiftedMissingDropped) {
  Eigen::VectorXd d(4), l(4);
  d << 5.0, 0.0, 2.0, 7.0;
  l << -3.0, -2.0, kMissing, -1.0;
  const Eigen::VectorXd w = death_weights(d, l);
  EXPECT_EQ(w(0), 5.0);
  EXPECT_EQ(w(1), 2.0);
  EXPECT_EQ(w(2), 0.0);
  EXPECT_EQ(w(3), 7.0);
  const Eigen::VectorXd u = death_weights(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4));
  EXPECT_EQ(u, Eigen::VectorXd::Ones(4));
}

TEST(SmoothCurve, MatchesReferenceFits) {
  const auto fx = load_fixture("smoothing_fixtures.json");
  for (const auto& c : fx.at("cases")) {
    SCOPED_TRACE(c.at("name").get<std::string>());
    SmoothConfig cfg;
    if (!c.at("lambda").is_null()) cfg.lambda = c.at("lambda").get<double>();
    const SmoothedCurve fit = smooth_curve(kAges, to_vector(c.at("y")), to_vector(c.at("w")), cfg);
    EXPECT_LT((fit.values - to_vector(c.at("fitted"))).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_EQ(fit.active_constraints, c.at("active").get<int>());
    if (c.contains("selected_lambda")) {
      EXPECT_DOUBLE_EQ(fit.lambda, c.at("selected_lambda").get<double>());
    }
  }
}

TEST(SmoothCurve, LinearInputPassesThrough) {
  Eigen::VectorXd y(41);
  for (int i = 0; i < 41; ++i) y(i) = -6.0 + 0.09 * i;
  for (double lambda : {0.0, 1.0, 1e4}) {
    const auto fit = smooth_curve(kAges, y, Eigen::VectorXd::Ones(41), fixed_lambda(lambda));
    EXPECT_LT((fit.values - y).cwiseAbs().maxCoeff(), 1e-8) << lambda;
  }
}

TEST(SmoothCurve, MissingCellsAreImputed) {
  Eigen::VectorXd y(41);
  for (int i = 0; i < 41; ++i) y(i) = -6.0 + 0.09 * i;
  y(10) = kMissing;
  y(40) = kMissing;
  const auto fit = smooth_curve(kAges, y, Eigen::VectorXd::Ones(41), fixed_lambda(1.0));
  EXPECT_NEAR(fit.values(10), -6.0 + 0.9, 1e-8);
  EXPECT_NEAR(fit.values(40), -6.0 + 3.6, 1e-8);
}

TEST(SmoothCurve, MonotoneOnNoisyCurves) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.1, 2.0);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd y(41), w(41);
    for (int i = 0; i < 41; ++i) {
      y(i) = std::log(2e-4 + 2e-5 * std::exp(0.1 * (60 + i))) + 0.3 * z(rng);
      w(i) = u(rng);
    }
    const auto fit = smooth_curve(kAges, y, w, SmoothConfig{});
    for (int i = 5; i < 40; ++i) worst = std::min(worst, fit.values(i + 1) - fit.values(i));
  }
  EXPECT_GE(worst, -1e-10);
}

TEST(SmoothCurve, Errors) {
  Eigen::VectorXd y = Eigen::VectorXd::Constant(41, kMissing);
  for (int i = 0; i < 10; ++i) y(i) = -5.0;
  EXPECT_THROW(smooth_curve(kAges, y, Eigen::VectorXd::Ones(41), SmoothConfig{}), InsufficientDataError);
  EXPECT_THROW(smooth_curve(kAges, Eigen::VectorXd::Zero(41), Eigen::VectorXd::Zero(41), SmoothConfig{}),
               DegenerateWeightsError);
  EXPECT_THROW(smooth_curve(kAges, Eigen::VectorXd::Zero(40), Eigen::VectorXd::Ones(40), SmoothConfig{}),
               DimensionError);
  SmoothConfig bad;
  bad.monotone_from_age = 120;
  EXPECT_THROW(bad.validate(kAges), ValidationError);
}

TEST(SmoothSurface, OnlyLogRatesChange) {
  const int n = 3;
  Grid d(n, 41), e(n, 41);
  std::mt19937_64 rng(5);
  std::poisson_distribution<int> pois(50);
  for (int t = 0; t < n; ++t)
    for (int i = 0; i < 41; ++i) {
      e(t, i) = 1e4;
      d(t, i) = pois(rng) * std::exp(0.05 * i) / 5.0;
    }
  const auto s = MortalitySurface::from_counts("A", {2000, 2001, 2002}, kAges, d, e);
  std::vector<double> lambdas;
  const auto sm = smooth_surface(s, SmoothConfig{}, &lambdas);
  EXPECT_EQ(lambdas.size(), 3u);
  EXPECT_EQ(sm.deaths(), s.deaths());
  EXPECT_EQ(sm.rates(), s.rates());
  EXPECT_NE(sm.log_rates(), s.log_rates());
}
