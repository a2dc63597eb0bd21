#include <gtest/gtest.h>

#include <random>

#include "gfts/annuity.hpp"
#include "gfts/error.hpp"

using namespace gfts;

namespace {

Eigen::MatrixXd gompertz_forecast(int ages, int horizon, double improvement) {
  Eigen::MatrixXd m(ages, horizon);
  for (int x = 0; x < ages; ++x)
    for (int j = 0; j < horizon; ++j) m(x, j) = 0.005 * std::exp(0.1 * x) * std::pow(1.0 - improvement, j + 1);
  return m;
}

}  // namespace

TEST(Annuity, ShortfallExample) {
  EXPECT_EQ(shortfall(10000, 20000, 8.3649, 0.1), 1672980.0);
}

TEST(Annuity, ZeroMortalityAndZeroInterestPricesAtMaturity) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(41, 30);
  for (int t : {1, 5, 30}) EXPECT_DOUBLE_EQ(annuity_price(survival_curve(zero, 0, t), 0.0, t), t);
  EXPECT_NEAR(annuity_price(survival_curve(zero, 0, 2), 0.03, 2), std::exp(-0.03) + std::exp(-0.06), 1e-15);
}

TEST(Annuity, SurvivalFollowsTheCohortDiagonal) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(4, 3, 9.0);
  m(1, 0) = 0.1;
  m(2, 1) = 0.2;
  m(3, 2) = 0.3;
  const Eigen::VectorXd s = survival_curve(m, 1, 3);
  EXPECT_NEAR(s(0), std::exp(-0.1), 1e-15);
  EXPECT_NEAR(s(2), std::exp(-0.6), 1e-15);
  EXPECT_THROW(survival_curve(m, 2, 3), HorizonError);
  EXPECT_THROW(survival_curve(m, 0, 4), HorizonError);
  EXPECT_THROW(survival_curve(m, 0, 0), HorizonError);
  m(2, 1) = -0.1;
  EXPECT_THROW(survival_curve(m, 1, 3), InvalidInputError);
}

TEST(Annuity, MaturityRecursion) {
  const Eigen::MatrixXd m = gompertz_forecast(41, 30, 0.01);
  const double eta = 0.03;
  for (int age : {0, 5, 10}) {
    for (int t = 1; t < 30; ++t) {
      const Eigen::VectorXd s = survival_curve(m, age, t + 1);
      const double step = annuity_price(s, eta, t + 1) - annuity_price(s.head(t), eta, t);
      EXPECT_NEAR(step, std::exp(-eta * (t + 1)) * s(t), 1e-12);
    }
  }
  EXPECT_THROW(annuity_price(Eigen::VectorXd::Ones(3), 0.03, 4), HorizonError);
  EXPECT_THROW(annuity_price(Eigen::VectorXd::Ones(3), -0.01, 3), ValidationError);
}

TEST(Annuity, QuoteTableMarksCellsPastTheBound) {
  const AgeGrid ages = AgeGrid::canonical();
  const Eigen::MatrixXd m = gompertz_forecast(41, 30, 0.01);
  const auto q = quote_table("Japan*F", "OLS", m, ages, {60, 85}, {5, 20}, 0.03, nullptr, 0.8);
  ASSERT_EQ(q.size(), 4u);
  EXPECT_TRUE(q[1].price.has_value());
  EXPECT_FALSE(q[3].price.has_value());
  EXPECT_FALSE(q[0].interval.has_value());
  const std::string csv = quotes_to_csv(q);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "series,method,age,maturity,rate,price,lower,upper");
  EXPECT_NE(csv.find("Japan*F,OLS,85,20,0.03,NA,NA,NA\n"), std::string::npos);
  EXPECT_THROW(quote_table("a", "b", m, ages, {59}, {5}, 0.03, nullptr, 0.8), ValidationError);
}

TEST(Annuity, ReplicateIntervalBracketsThePrice) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  const Eigen::MatrixXd point = gompertz_forecast(41, 20, 0.01);
  std::vector<Eigen::MatrixXd> reps;
  for (int r = 0; r < 200; ++r) reps.push_back(point * std::exp(0.1 * z(rng)));
  const double price = annuity_price(survival_curve(point, 5, 15), 0.03, 15);
  const auto [lo, hi] = annuity_interval(reps, 0.03, 5, 15, 0.8);
  EXPECT_LT(lo, price);
  EXPECT_GT(hi, price);
  EXPECT_THROW(annuity_interval({}, 0.03, 5, 15, 0.8), InsufficientDataError);
  const auto q = quote_table("s", "BU", point, AgeGrid::canonical(), {65}, {15}, 0.03, &reps, 0.8);
  ASSERT_TRUE(q[0].interval.has_value());
  EXPECT_EQ(q[0].interval->first, lo);
}
