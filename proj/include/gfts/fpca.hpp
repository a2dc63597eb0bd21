#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gfts/arima.hpp"
#include "gfts/domain.hpp"

namespace gfts {

/// How many principal components to keep: the smallest J explaining a share
/// `delta` of the positive-eigenvalue variance, or a fixed J.
struct ComponentSelector {
  enum class Kind { Threshold, Fixed };
  Kind kind = Kind::Threshold;
  double delta = 0.95;
  int fixed = 6;

  static ComponentSelector threshold(double d) { return {Kind::Threshold, d, 0}; }
  static ComponentSelector fixed_count(int j) { return {Kind::Fixed, 0.0, j}; }
};

/// f_t(x) = a(x) + sum_j b_j(x) k_{t,j} + e_t(x) on a unit-spaced age grid.
struct FtsModel {
  Eigen::VectorXd mean;         // a(x)
  Eigen::MatrixXd components;   // age x J, orthonormal columns
  Eigen::MatrixXd scores;       // year x J, zero-mean columns
  Eigen::VectorXd eigenvalues;  // full spectrum, nonincreasing
  int retained = 0;             // J
  Grid residuals;               // year x age
  std::vector<ArimaSpec> score_models;
  std::vector<ArimaDiagnostics> score_search;

  /// Rank-J reconstruction, year x age.
  Grid fitted() const;
};

/// Smallest J whose cumulative eigenvalue share reaches `delta`; zero
/// eigenvalues are left out of the denominator.
int select_J(const Eigen::VectorXd& eigenvalues, double delta);

FtsModel fpca_fit(const Grid& log_rates, const ComponentSelector& selector, bool fit_score_models = true);
inline FtsModel fpca_fit(const MortalitySurface& smoothed, const ComponentSelector& selector,
                         bool fit_score_models = true) {
  return fpca_fit(smoothed.log_rates(), selector, fit_score_models);
}

/// auto_arima when the series is long enough, otherwise a random walk with
/// drift (3..7 points) or a plain random walk.
ArimaSpec fit_score_model(const Eigen::VectorXd& scores, ArimaDiagnostics* diagnostics = nullptr);

/// Age x horizon log-rate forecasts from forecast scores.
Eigen::MatrixXd fts_forecast(const FtsModel& model, int horizon);

/// Functional R^2 on the rate scale, summed over years and ages:
/// 1 - sum (e^m - e^f)^2 / sum (e^m - e^mbar)^2. Missing observed cells are
/// skipped. Can be negative.
double r_squared(const Grid& observed_log_rates, const Grid& fitted_log_rates);

}  // namespace gfts
