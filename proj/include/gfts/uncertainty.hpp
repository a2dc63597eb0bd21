#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gfts/domain.hpp"
#include "gfts/fpca.hpp"
#include "gfts/grouping.hpp"
#include "gfts/leecarter.hpp"

namespace gfts {

/// Lower and upper bounds per age (column per horizon when stacked).
struct IntervalSet {
  enum class Kind { Pointwise, Simultaneous };
  Kind kind = Kind::Pointwise;
  double level = 0.8;
  Eigen::MatrixXd lower;  // age x horizon
  Eigen::MatrixXd upper;  // age x horizon
  Eigen::VectorXd psi;    // per horizon
};

std::string to_string(IntervalSet::Kind k);

/// Bootstrap band for one horizon.
struct CalibratedBand {
  Eigen::VectorXd gamma_lower;  // per age, <= 0
  Eigen::VectorXd gamma_upper;  // per age, >= 0
  double psi_pointwise = 0.0;
  double psi_simultaneous = 0.0;
  double coverage_pointwise = 0.0;      // achieved in-sample fraction
  double coverage_simultaneous = 0.0;
  bool gamma_fallback = false;  // a zero percentile was replaced by the error extreme
};

/// Percentiles of the resampled errors used as gamma^l and gamma^u.
inline constexpr double kGammaLowerQuantile = 0.10;
inline constexpr double kGammaUpperQuantile = 0.90;

/// Linear-interpolated empirical quantile (type 7). Sorts a copy.
double quantile(std::vector<double> values, double p);

/// h-step in-sample forecast errors, one row per forecast origin xi (the
/// number of years used), for xi = first..n-h. `forecaster(xi, h)` returns
/// the log-rate forecast of year xi + h from the first xi years.
Eigen::MatrixXd insample_errors(const std::function<Eigen::VectorXd(int xi, int h)>& forecaster,
                                const Grid& observed_log_rates, int h, int first);

/// FPCA version with the full-sample score models applied to truncated score
/// histories; M = n - h - J + 1 curves (J taken as at least 1).
Eigen::MatrixXd insample_errors(const FtsModel& model, const Grid& observed_log_rates, int h);

/// Lee-Carter version: kappa truncated at xi, drift from the full sample.
Eigen::MatrixXd insample_errors(const LeeCarterModel& model, const Grid& observed_log_rates, int h);

/// gamma from `replicates` whole-curve resamples of `errors` (M x age) and
/// the psi multipliers reaching `coverage` for points and for whole curves.
CalibratedBand calibrate_band(const Eigen::MatrixXd& errors, double coverage, int replicates, std::uint64_t seed);

/// Pointwise and simultaneous intervals for one horizon around `point`.
struct BandPair {
  IntervalSet pointwise;
  IntervalSet simultaneous;
  CalibratedBand band;
};
BandPair bootstrap_intervals(const Eigen::MatrixXd& errors, const Eigen::VectorXd& point, double coverage,
                             int replicates, std::uint64_t seed);

/// Replicate log-rate paths (age x horizon each): the point forecast plus an
/// in-sample error curve drawn independently at every horizon. Paths cover
/// the first errors_by_horizon.size() horizons.
std::vector<Eigen::MatrixXd> bootstrap_paths(const Eigen::MatrixXd& point_log,
                                             const std::vector<Eigen::MatrixXd>& errors_by_horizon, int replicates,
                                             std::uint64_t seed);

/// Reconciles every replicate of `set` (bottom series only for BU, all series
/// for OLS). Replicate r uses `replicate_s[r]` when given, else `s`.
ForecastSet reconcile_bootstrap(const GroupStructure& structure, const ForecastSet& set, Method method,
                                const SummingForecast& s,
                                const std::vector<SummingForecast>* replicate_s = nullptr);

/// Empirical (1 - level)/2 and (1 + level)/2 quantiles across replicates.
IntervalSet replicate_intervals(const std::vector<Eigen::MatrixXd>& replicates, double level);

}  // namespace gfts
