#pragma once

#include <Eigen/Dense>

#include "gfts/arima.hpp"
#include "gfts/domain.hpp"

namespace gfts {

/// log m(x,t) = a_x + b_x kappa_t + eps(x,t), with sum_x b_x = 1 and
/// sum_t kappa_t = 0.
struct LeeCarterModel {
  Eigen::VectorXd a;               // per age
  Eigen::VectorXd b;               // per age
  Eigen::VectorXd kappa;           // per year
  Eigen::VectorXd kappa_adjusted;  // per year; equals kappa until adjusted
  Grid residuals;                  // year x age
  ArimaSpec rwd;                   // random walk with drift on kappa_adjusted

  /// a + b * k for one index value.
  Eigen::VectorXd log_rates_at(double k) const { return a + b * k; }
  /// Year x age fitted log rates from `kappa` (or the adjusted index).
  Grid fitted_log_rates(bool adjusted = false) const;
};

/// First singular pair of the centred log-rate matrix, rescaled so b sums to
/// one. Throws IncompleteDataError on missing log rates.
LeeCarterModel fit_lee_carter(const MortalitySurface& surface);

/// Per-year index reproducing observed total deaths:
/// sum_x E(x,t) exp(a_x + b_x k) = sum_x D(x,t), solved by bisection.
Eigen::VectorXd adjust_kappa(const LeeCarterModel& model, const MortalitySurface& surface);

/// Copy of `model` with the adjusted index and its random walk with drift.
LeeCarterModel with_adjusted_kappa(LeeCarterModel model, const MortalitySurface& surface);

/// Age x horizon log-rate forecasts; kappa follows a random walk with drift
/// fitted to the adjusted index.
Eigen::MatrixXd forecast_lee_carter(const LeeCarterModel& model, int horizon);

}  // namespace gfts
