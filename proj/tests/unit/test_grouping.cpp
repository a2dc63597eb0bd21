#include <gtest/gtest.h>

#include <random>

#include "gfts/error.hpp"
#include "gfts/grouping.hpp"
#include "test_util.hpp"

using namespace gfts;

namespace {

// Two areas x two sexes in one region: four bottoms under eight groups.
GroupStructure small_structure() {
  return geo_sex_structure("All", {{"R", {"A", "B"}}});
}

Eigen::MatrixXd normal_equations_projection(const Eigen::MatrixXd& s, const Eigen::VectorXd& r) {
  const Eigen::MatrixXd sts = s.transpose() * s;
  return s * sts.inverse() * (s.transpose() * r);
}

}  // namespace

TEST(SummingMatrix, ExposureRatiosAndIdentityBlock) {
  const GroupStructure g({"F", "M"}, "Sex", {{"T", "Total", {"F", "M"}}});
  Eigen::VectorXd e(2);
  e << 3.0, 1.0;
  const SummingMatrix s = build_summing_matrix(g, e);
  Eigen::MatrixXd expected(3, 2);
  expected << 0.75, 0.25, 1.0, 0.0, 0.0, 1.0;
  EXPECT_EQ(s, expected);
  e(0) = -1.0;
  EXPECT_THROW(build_summing_matrix(g, e), InvalidInputError);
  EXPECT_THROW(build_summing_matrix(g, Eigen::VectorXd::Zero(2)), DegenerateError);
}

TEST(SummingMatrix, RowsOfEveryGroupSumToOne) {
  const GroupStructure g = japan_structure();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(100.0, 5000.0);
  Eigen::VectorXd e(static_cast<Eigen::Index>(g.bottom_count()));
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = u(rng);
  const SummingMatrix s = build_summing_matrix(g, e);
  EXPECT_EQ(s.rows(), 168);
  EXPECT_EQ(s.cols(), 94);
  EXPECT_LT((s.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(SummingForecast, CohortRuleUsesShiftedObservedExposuresAndForecastShares) {
  const GroupStructure g({"F", "M"}, "Sex", {{"T", "Total", {"F", "M"}}});
  Eigen::MatrixXd last(3, 2);  // ages x bottom
  last << 10, 30, 20, 20, 30, 10;
  Eigen::MatrixXd shares(2, 2);  // bottom x horizon
  shares << 0.4, 0.45, 0.6, 0.55;
  const SummingForecast s = SummingForecast::from_shares(g, last, shares);
  // age 2, h 1 takes age 1 of the last observed year
  EXPECT_DOUBLE_EQ(s.slice(2, 1)(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.slice(2, 2)(0, 0), 0.25);
  // base age at h: share forecast at h; age 1 at h 2: share forecast at h 1
  EXPECT_DOUBLE_EQ(s.slice(0, 2)(0, 0), 0.45);
  EXPECT_DOUBLE_EQ(s.slice(1, 2)(0, 0), 0.4);
  EXPECT_TRUE(s.uses_forecast_shares(1, 2));
  EXPECT_FALSE(s.uses_forecast_shares(2, 2));
  EXPECT_THROW(s.slice(3, 1), DimensionError);
  EXPECT_THROW(s.slice(0, 3), DimensionError);
  const SummingForecast r = s.with_base_shares(shares.rowwise().reverse());
  EXPECT_DOUBLE_EQ(r.slice(0, 1)(0, 0), 0.45);
}

TEST(OlsSlice, MatchesNormalEquationsOnToyInstances) {
  const GroupStructure g = small_structure();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd e(4), r(static_cast<Eigen::Index>(g.series_count()));
    for (int i = 0; i < 4; ++i) e(i) = u(rng);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = 0.01 * (1.0 + 0.2 * z(rng));
    const SummingMatrix s = build_summing_matrix(g, e);
    const Eigen::VectorXd oracle = normal_equations_projection(s, r);
    EXPECT_LT((ols_slice(s, r) - oracle).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ols_slice_structured(g, e, r) - oracle).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(OlsSlice, IdempotentAndFixesConsistentInputs) {
  const GroupStructure g = small_structure();
  Eigen::VectorXd e(4), b(4);
  e << 1.0, 2.0, 3.0, 4.0;
  b << 0.01, 0.02, 0.015, 0.03;
  const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(g.series_count()), 0.01, 0.04);
  const SummingMatrix s = build_summing_matrix(g, e);
  const Eigen::VectorXd consistent = bottom_up_slice(s, b);
  EXPECT_LT((ols_slice(s, consistent) - consistent).cwiseAbs().maxCoeff(), 1e-15);
  const Eigen::VectorXd once = ols_slice(s, r);
  EXPECT_LT((ols_slice(s, once) - once).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(OlsSlice, RankDeficientDesignThrows) {
  Eigen::MatrixXd s(3, 2);
  s << 1, 1, 1, 1, 1, 1;
  EXPECT_THROW(ols_slice(s, Eigen::VectorXd::Ones(3), "test"), SingularDesignError);
}

TEST(Reconcile, BottomUpAndOlsAreConsistent) {
  const GroupStructure g = small_structure();
  const int ages = 3, horizon = 2;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.005, 0.05);
  ForecastSet base;
  base.horizon = horizon;
  base.series = g.series_ids();
  for (std::size_t k = 0; k < g.series_count(); ++k) {
    Eigen::MatrixXd m(ages, horizon);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    base.rates.push_back(m);
  }
  Eigen::MatrixXd last(ages, 4);
  last << 1, 2, 3, 4, 2, 2, 2, 2, 4, 3, 2, 1;
  Eigen::MatrixXd shares(4, horizon);
  shares << 0.1, 0.2, 0.2, 0.2, 0.3, 0.3, 0.4, 0.3;
  const SummingForecast s = SummingForecast::from_shares(g, last, shares);

  const auto ng = static_cast<std::ptrdiff_t>(g.group_count());
  ForecastSet bottom = base;
  bottom.series.erase(bottom.series.begin(), bottom.series.begin() + ng);
  bottom.rates.erase(bottom.rates.begin(), bottom.rates.begin() + ng);
  const ForecastSet bu = bottom_up(g, bottom, s);
  const ForecastSet ols = ols_reconcile(g, base, s);
  EXPECT_EQ(aggregation_violation(g, bu, s), 0.0);
  EXPECT_LT(aggregation_violation(g, ols, s), 1e-15);
  EXPECT_GT(aggregation_violation(g, base, s), 1e-4);
  for (std::size_t k = g.group_count(); k < g.series_count(); ++k) EXPECT_EQ(bu.rates[k], base.rates[k]);
  // direct summation for the total at age 1, h 2 (slice uses observed age 0)
  const Eigen::VectorXd e = last.row(0).transpose();
  const SummingMatrix sl = s.slice(1, 2);
  double direct = 0.0;
  for (int b = 0; b < 4; ++b) {
    EXPECT_DOUBLE_EQ(sl(0, b), e(b) / e.sum());
    direct += sl(0, b) * base.rates[static_cast<std::size_t>(ng + b)](1, 1);
  }
  EXPECT_EQ(bu.rates[0](1, 1), direct);
  const ForecastSet twice = ols_reconcile(g, ols, s);
  for (std::size_t k = 0; k < g.series_count(); ++k) EXPECT_LT((twice.rates[k] - ols.rates[k]).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Reconcile, MissingSeriesIsReported) {
  const GroupStructure g({"F", "M"}, "Sex", {{"T", "Total", {"F", "M"}}});
  ForecastSet bottom;
  bottom.horizon = 1;
  bottom.series = {"F"};
  bottom.rates = {Eigen::MatrixXd::Constant(1, 1, 0.01)};
  const SummingForecast s = SummingForecast::fixed(build_summing_matrix(g, Eigen::VectorXd::Ones(2)), 1, 1);
  EXPECT_THROW(bottom_up(g, bottom, s), DimensionError);
  bottom.series = {"X"};
  EXPECT_THROW(bottom_up(g, bottom, s), ReferenceError);
}

TEST(ExposureRatios, LinearLogitSharesExtrapolateExactly) {
  // Two bottoms: logit p and logit(1 - p) = -logit p are both linear in t.
  const GroupStructure g({"F", "M"}, "B", {{"T", "Total", {"F", "M"}}});
  const int years = 12, ages = 2, horizon = 4;
  auto logistic = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  auto share = [&](int t) { return logistic(-0.3 + 0.04 * t); };
  std::vector<Grid> expo(2, Grid::Constant(years, ages, 100.0));
  for (int t = 0; t < years; ++t) {
    expo[0](t, 0) = 1e5 * share(t);
    expo[1](t, 0) = 1e5 * (1.0 - share(t));
  }
  const ExposureRatioForecast f = forecast_exposure_ratios(g, expo, horizon);
  ASSERT_EQ(f.shares.rows(), 2);
  for (int h = 1; h <= horizon; ++h) {
    EXPECT_NEAR(f.shares(0, h - 1), share(years - 1 + h), 1e-6) << h;
    EXPECT_NEAR(f.shares.col(h - 1).sum(), 1.0, 1e-15);
  }
  EXPECT_EQ(f.last_observed(1, 1), 100.0);
}

TEST(ExposureRatios, NoisySharesFollowTheirModels) {
  const GroupStructure g({"F", "M"}, "B", {{"T", "Total", {"F", "M"}}});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  const int years = 30, horizon = 5;
  std::vector<Grid> expo(2, Grid::Constant(years, 1, 1.0));
  double lvl = 0.0;
  for (int t = 0; t < years; ++t) {
    lvl += 0.01 + 0.02 * z(rng);
    expo[0](t, 0) = 5e4 * std::exp(lvl);
    expo[1](t, 0) = 5e4;
  }
  const ExposureRatioForecast f = forecast_exposure_ratios(g, expo, horizon);
  const Eigen::VectorXd zhat = forecast(f.models[0], f.history.col(0), horizon).mean;
  const Eigen::VectorXd zhat1 = forecast(f.models[1], f.history.col(1), horizon).mean;
  for (int h = 0; h < horizon; ++h) {
    const double p0 = 1.0 / (1.0 + std::exp(-zhat(h)));
    const double p1 = 1.0 / (1.0 + std::exp(-zhat1(h)));
    EXPECT_NEAR(f.shares(0, h), p0 / (p0 + p1), 1e-12);
  }
  const auto reps = f.bootstrap_shares(50, 3);
  ASSERT_EQ(reps.size(), 50u);
  for (const auto& r : reps) EXPECT_NEAR(r.col(horizon - 1).sum(), 1.0, 1e-12);
  const auto again = f.bootstrap_shares(50, 3);
  EXPECT_EQ(reps[17], again[17]);
}

TEST(ExposureRatios, InvalidShareAndSingleBottom) {
  const GroupStructure g({"F", "M"}, "B", {{"T", "Total", {"F", "M"}}});
  std::vector<Grid> expo{Grid::Constant(10, 2, 0.0), Grid::Constant(10, 2, 5.0)};
  EXPECT_THROW(forecast_exposure_ratios(g, expo, 3), ValidationError);
  const GroupStructure one({"A"}, "B", {});
  const auto f = forecast_exposure_ratios(one, {Grid::Constant(10, 2, 5.0)}, 3);
  EXPECT_EQ(f.shares, Eigen::MatrixXd::Ones(1, 3));
}
