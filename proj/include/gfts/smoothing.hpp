#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gfts/domain.hpp"

namespace gfts {

/// Penalized cubic regression spline settings.
///
/// `lambda` empty means "auto": chosen by generalized cross-validation over
/// 21 log-spaced values in [1e-4, 1e4].
struct SmoothConfig {
  int basis_knots = 15;        // interior knots
  int penalty_order = 2;       // difference order of the roughness penalty
  int monotone_from_age = 65;  // fitted curve nondecreasing from this age on
  std::optional<double> lambda;

  void validate(const AgeGrid& ages) const;
};

struct SmoothedCurve {
  Eigen::VectorXd values;  // fitted value at every grid age
  double lambda = 0.0;     // smoothing parameter used
  int active_constraints = 0;
};

/// Weighted penalized least-squares spline fit of one log-mortality curve,
/// constrained to be nondecreasing for ages >= monotone_from_age. Missing
/// (NaN) values are ignored in the fit and imputed from the spline.
SmoothedCurve smooth_curve(const AgeGrid& ages, const Eigen::VectorXd& log_rates,
                           const Eigen::VectorXd& weights, const SmoothConfig& config);

/// Per-age weights for one curve: death counts, with zero counts lifted to
/// the smallest positive count. Cells with missing log rate get weight 0.
/// Falls back to unit weights when the curve has no positive counts.
Eigen::VectorXd death_weights(const Eigen::VectorXd& deaths, const Eigen::VectorXd& log_rates);

/// Smooths every year independently. Weights are `death_weights`
/// normalized to mean one over the observed cells. Deaths, exposures and
/// rates are carried through; only log_rates changes.
MortalitySurface smooth_surface(const MortalitySurface& surface, const SmoothConfig& config,
                                std::vector<double>* lambdas = nullptr);

/// Cubic B-spline design matrix at `x` (rows) with `interior_knots` knots at
/// equally spaced quantiles of x; the end knots continue the end spacing.
Eigen::MatrixXd bspline_design(const Eigen::VectorXd& x, int interior_knots);

/// Difference matrix of the given order for `n` coefficients.
Eigen::MatrixXd difference_matrix(int n, int order);

}  // namespace gfts
