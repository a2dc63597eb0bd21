#include <gtest/gtest.h>

#include <random>

#include "gfts/error.hpp"
#include "gfts/leecarter.hpp"
#include "test_util.hpp"

using namespace gfts;
using gfts::test::load_fixture;
using gfts::test::to_matrix;
using gfts::test::to_vector;

namespace {

MortalitySurface fixture_surface(const nlohmann::json& fx) {
  const Grid logs = to_matrix(fx.at("log_rates"));
  std::vector<int> years(static_cast<std::size_t>(logs.rows()));
  for (std::size_t t = 0; t < years.size(); ++t) years[t] = 1990 + static_cast<int>(t);
  const int first = fx.at("first_age").get<int>();
  const AgeGrid ages = AgeGrid::range(first, first + static_cast<int>(logs.cols()) - 1, false);
  const auto counts = MortalitySurface::from_counts("fx", years, ages, to_matrix(fx.at("deaths")),
                                                    to_matrix(fx.at("exposures")));
  return counts.with_log_rates(logs);
}

}  // namespace

TEST(LeeCarter, MatchesSvdReference) {
  const auto fx = load_fixture("lc_fpca_fixtures.json");
  const LeeCarterModel m = fit_lee_carter(fixture_surface(fx));
  EXPECT_LT((m.a - to_vector(fx.at("a"))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.b - to_vector(fx.at("b"))).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((m.kappa - to_vector(fx.at("kappa"))).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LeeCarter, AdjustedIndexMatchesRootFinder) {
  const auto fx = load_fixture("lc_fpca_fixtures.json");
  const MortalitySurface s = fixture_surface(fx);
  const LeeCarterModel m = with_adjusted_kappa(fit_lee_carter(s), s);
  EXPECT_LT((m.kappa_adjusted - to_vector(fx.at("kappa_adjusted"))).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(m.rwd.constant, fx.at("adjusted_drift").get<double>(), 1e-10);
  EXPECT_NEAR(m.rwd.sigma2, fx.at("adjusted_sigma2").get<double>(), 1e-10);
}

TEST(LeeCarter, ExactRecoveryAndConstraints) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 25; ++rep) {
    const int n = 20 + rep % 7;
    const int p = 10 + rep % 5;
    Eigen::VectorXd a(p), b(p), k(n);
    for (int x = 0; x < p; ++x) {
      a(x) = -5.0 + 0.1 * x + 0.01 * z(rng);
      b(x) = 1.0 + 0.2 * z(rng);
    }
    b /= b.sum();
    for (int t = 0; t < n; ++t) k(t) = -0.5 * t + z(rng);
    k.array() -= k.mean();
    const Grid logs = (k * b.transpose()).rowwise() + a.transpose();
    std::vector<int> years(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) years[static_cast<std::size_t>(t)] = 2000 + t;
    const auto s = MortalitySurface::from_log_rates("x", years, AgeGrid::range(60, 60 + p - 1, false), logs,
                                                    Grid::Constant(n, p, 1e4));
    const LeeCarterModel m = fit_lee_carter(s);
    EXPECT_LT(m.residuals.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(m.b.sum(), 1.0, 1e-8);
    EXPECT_NEAR(m.kappa.sum(), 0.0, 1e-8);
    EXPECT_LT((m.b - b).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((m.kappa - k).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(LeeCarter, ForecastFollowsDriftFromLastAdjustedIndex) {
  const auto fx = load_fixture("lc_fpca_fixtures.json");
  const MortalitySurface s = fixture_surface(fx);
  const LeeCarterModel m = with_adjusted_kappa(fit_lee_carter(s), s);
  const Eigen::MatrixXd f = forecast_lee_carter(m, 3);
  const double last = m.kappa_adjusted(m.kappa_adjusted.size() - 1);
  const double drift = fx.at("adjusted_drift").get<double>();
  EXPECT_LT((f.col(2) - (m.a + m.b * (last + 3.0 * drift))).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_THROW(forecast_lee_carter(m, 0), HorizonError);
}

TEST(LeeCarter, MissingLogRatesRejected) {
  Grid logs = Grid::Constant(5, 3, -4.0);
  logs(2, 1) = kMissing;
  const auto s = MortalitySurface::from_log_rates("x", {1, 2, 3, 4, 5}, AgeGrid::range(60, 62, false),
                                                  Grid::Constant(5, 3, -4.0), Grid::Constant(5, 3, 1e3))
                     .with_log_rates(logs);
  EXPECT_THROW(fit_lee_carter(s), IncompleteDataError);
}

TEST(LeeCarter, ConstantSurfaceGivesZeroIndex) {
  const auto s = MortalitySurface::from_log_rates("x", {1, 2, 3, 4}, AgeGrid::range(60, 63, false),
                                                  Grid::Constant(4, 4, -3.0), Grid::Constant(4, 4, 1e3));
  const LeeCarterModel m = fit_lee_carter(s);
  EXPECT_EQ(m.kappa, Eigen::VectorXd::Zero(4));
  EXPECT_NEAR(m.b.sum(), 1.0, 1e-15);
}
