#include <gtest/gtest.h>

#include <random>

#include "gfts/error.hpp"
#include "gfts/fpca.hpp"
#include "test_util.hpp"

using namespace gfts;
using gfts::test::load_fixture;
using gfts::test::to_matrix;
using gfts::test::to_vector;

TEST(SelectJ, ThresholdCounts) {
  Eigen::VectorXd ev(3);
  ev << 9.0, 0.5, 0.5;
  EXPECT_EQ(select_J(ev, 0.95), 2);
  EXPECT_EQ(select_J(ev, 0.9), 1);
  EXPECT_EQ(select_J(ev, 1.0), 3);
  Eigen::VectorXd with_zero(3);
  with_zero << 3.0, 1.0, 0.0;
  EXPECT_EQ(select_J(with_zero, 1.0), 2);
  EXPECT_THROW(select_J(Eigen::VectorXd::Zero(2), 0.9), DegenerateError);
}

TEST(Fpca, MatchesSvdReference) {
  const auto fx = load_fixture("lc_fpca_fixtures.json");
  const Grid logs = to_matrix(fx.at("log_rates"));
  const FtsModel m = fpca_fit(logs, ComponentSelector::fixed_count(2), false);
  EXPECT_LT((m.eigenvalues - to_vector(fx.at("eigenvalues"))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.fitted() - to_matrix(fx.at("rank2_fitted"))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(r_squared(logs, m.fitted()), fx.at("rank2_r_squared").get<double>(), 1e-12);
}

TEST(Fpca, VarianceBookkeepingAndFullRankReconstruction) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 15 + rep;
    const int p = 8 + rep % 9;
    Grid y(n, p);
    for (int t = 0; t < n; ++t)
      for (int x = 0; x < p; ++x) y(t, x) = -6.0 + 0.08 * x - 0.02 * t + 0.1 * z(rng);
    const FtsModel m = fpca_fit(y, ComponentSelector::fixed_count(std::min(n - 1, p)), false);
    const Grid centred = y.rowwise() - y.colwise().mean();
    const double total = centred.squaredNorm() / (n - 1);
    EXPECT_NEAR(m.eigenvalues.sum(), total, 1e-8 * std::max(1.0, total));
    EXPECT_LT((m.fitted() - y).cwiseAbs().maxCoeff(), 1e-8);
    const Eigen::MatrixXd gram = m.components.transpose() * m.components;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(m.scores.colwise().sum().cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Fpca, ThresholdSelectorAndScoreModels) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  const int n = 30, p = 12;
  Grid y(n, p);
  for (int t = 0; t < n; ++t)
    for (int x = 0; x < p; ++x) y(t, x) = -6.0 + 0.08 * x - 0.03 * t * (1.0 + 0.05 * x) + 0.002 * z(rng);
  const FtsModel m = fpca_fit(y, ComponentSelector::threshold(0.95));
  EXPECT_EQ(m.retained, 1);
  EXPECT_EQ(m.score_models.size(), 1u);
  // Oriented so the (falling-mortality) score trends upward.
  EXPECT_GT(m.scores(n - 1, 0), m.scores(0, 0));
  const Eigen::MatrixXd f = fts_forecast(m, 4);
  EXPECT_EQ(f.rows(), p);
  EXPECT_EQ(f.cols(), 4);
  EXPECT_TRUE((f.col(3).array() < y.row(n - 1).transpose().array()).all());
}

TEST(Fpca, ScoreModelFallbacks) {
  Eigen::VectorXd s(5);
  s << 0.0, 1.0, 2.5, 3.0, 4.5;
  const ArimaSpec rwd = fit_score_model(s);
  EXPECT_TRUE(rwd.include_drift);
  EXPECT_NEAR(rwd.constant, 4.5 / 4.0, 1e-15);
  const ArimaSpec rw = fit_score_model(s.head(2));
  EXPECT_EQ(rw.d, 1);
  EXPECT_FALSE(rw.include_drift);
}

TEST(Fpca, Errors) {
  EXPECT_THROW(fpca_fit(Grid::Zero(2, 4), ComponentSelector{}), InsufficientDataError);
  Grid y = Grid::Zero(5, 4);
  y(1, 1) = kMissing;
  EXPECT_THROW(fpca_fit(y, ComponentSelector{}), IncompleteDataError);
}

TEST(RSquared, ConstantSurfaceHasNoVariance) {
  const Grid y = Grid::Constant(4, 3, -3.0);
  EXPECT_THROW(r_squared(y, y), DegenerateError);
}
