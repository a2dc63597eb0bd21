#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfts/arima.hpp"
#include "gfts/domain.hpp"

namespace gfts {

/// One (age, time) slice of S in R = S b. Rows follow
/// GroupStructure::series_ids(), columns GroupStructure::bottom_series().
using SummingMatrix = Eigen::MatrixXd;

/// entry(g, b) = E_b / E_g for b in members(g) with E_g = sum of member
/// exposures; the bottom block is the identity.
SummingMatrix build_summing_matrix(const GroupStructure& structure, const Eigen::VectorXd& bottom_exposures);

/// Summing matrices over an age x horizon forecast grid.
///
/// Built from bottom-level pseudo-exposures: under the cohort rule
/// E(x, n+h) = E(x-1, n+h-1), slice (age i, h) uses the last observed
/// exposures at age i-h when i >= h, and the forecast base-age shares at
/// horizon h-i otherwise.
class SummingForecast {
 public:
  static SummingForecast from_shares(const GroupStructure& structure, Eigen::MatrixXd last_observed,
                                     Eigen::MatrixXd base_shares);
  /// Explicit bottom exposures per horizon (age x bottom each), e.g. the
  /// realised holdout exposures.
  static SummingForecast from_exposures(const GroupStructure& structure, std::vector<Eigen::MatrixXd> per_horizon);
  /// The same matrix for every slice.
  static SummingForecast fixed(SummingMatrix s, int ages, int horizon);

  /// Same observed part, different base-age shares (bootstrap replicate).
  SummingForecast with_base_shares(Eigen::MatrixXd base_shares) const;

  SummingMatrix slice(int age_index, int h) const;  // h is 1-based
  Eigen::VectorXd bottom_exposures(int age_index, int h) const;
  /// True when the slice comes from forecast shares rather than observed exposures.
  bool uses_forecast_shares(int age_index, int h) const;

  int horizon() const noexcept { return horizon_; }
  int age_count() const noexcept { return ages_; }
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const Eigen::MatrixXd& base_shares() const noexcept { return shares_; }

 private:
  enum class Mode { Shares, Exposures, Fixed };
  Mode mode_ = Mode::Fixed;
  int horizon_ = 0;
  int ages_ = 0;
  std::shared_ptr<const GroupStructure> structure_;
  std::shared_ptr<const Eigen::MatrixXd> observed_;  // age x bottom, last observed year
  Eigen::MatrixXd shares_;                           // bottom x horizon, base age
  std::shared_ptr<const std::vector<Eigen::MatrixXd>> per_horizon_;
  SummingMatrix fixed_;
};

/// Base-age share models and forecasts of the bottom-level exposure mix.
struct ExposureRatioForecast {
  std::shared_ptr<const GroupStructure> structure;
  Eigen::MatrixXd last_observed;         // age x bottom
  Eigen::MatrixXd history;               // year x bottom logit shares (empty when one bottom)
  std::vector<ArimaSpec> models;         // per bottom, on the logit scale
  Eigen::MatrixXd shares;                // bottom x horizon point forecasts
  std::vector<std::string> notes;

  SummingForecast summing() const;
  /// Residual-bootstrap replicates of the base-age shares (bottom x horizon
  /// each), innovations resampled per bottom series.
  std::vector<Eigen::MatrixXd> bootstrap_shares(int replicates, std::uint64_t seed) const;
};

/// Forecasts base-age exposure shares p_b = E_b / sum E on the logit scale
/// with auto_arima and applies the cohort rule above the base age.
/// `bottom_exposures` holds one year x age grid per bottom series.
ExposureRatioForecast forecast_exposure_ratios(const GroupStructure& structure,
                                               const std::vector<Grid>& bottom_exposures, int horizon);

/// R = S b for one slice.
Eigen::VectorXd bottom_up_slice(const SummingMatrix& s, const Eigen::VectorXd& bottom);

/// S (S'S)^{-1} S' R via column-pivoted QR. Throws SingularDesignError on
/// rank deficiency.
Eigen::VectorXd ols_slice(const SummingMatrix& s, const Eigen::VectorXd& all, const std::string& where = "");

/// Same projection for an exposure-ratio S = [A; I] built from
/// `bottom_exposures`, solved through the structured normal equations
/// (I + A'A) beta = R_b + A' R_a. Used for per-replicate slices where a QR per
/// slice would dominate the run time; S'S >= I keeps it well conditioned.
Eigen::VectorXd ols_slice_structured(const GroupStructure& structure, const Eigen::VectorXd& bottom_exposures,
                                     const Eigen::VectorXd& all);

/// Bottom-up forecasts for every series from bottom-level forecasts.
ForecastSet bottom_up(const GroupStructure& structure, const ForecastSet& bottom, const SummingForecast& s);

/// OLS optimal-combination reconciliation of base forecasts for every series.
ForecastSet ols_reconcile(const GroupStructure& structure, const ForecastSet& all, const SummingForecast& s);

/// Largest |aggregate - S * bottom| over all series, ages and horizons.
double aggregation_violation(const GroupStructure& structure, const ForecastSet& all, const SummingForecast& s);

}  // namespace gfts
