#pragma once

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gfts {

/// A fitted (or hand-specified) non-seasonal ARIMA(p,d,q) model.
///
/// `constant` is the mean of the series when d == 0 and the drift of the
/// differenced series when d == 1; it is only used when `include_drift` is
/// set. Models with d == 2 never carry a constant.
struct ArimaSpec {
  int p = 0;
  int d = 0;
  int q = 0;
  bool include_drift = false;
  std::vector<double> ar;  // phi_1..phi_p, model (1 - sum phi B^i)
  std::vector<double> ma;  // theta_1..theta_q, model (1 + sum theta B^j)
  double constant = 0.0;
  double sigma2 = 0.0;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double aicc = std::numeric_limits<double>::quiet_NaN();
  int nobs = 0;  // observations after differencing

  /// Coefficients plus the innovation variance.
  int parameter_count() const { return p + q + (include_drift ? 1 : 0) + 1; }
  std::string label() const;
};

/// One candidate visited by the order search.
struct SearchStep {
  int p = 0;
  int d = 0;
  int q = 0;
  bool constant = false;
  double aicc = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  std::string note;
};

struct ArimaDiagnostics {
  std::vector<double> kpss;  // statistic at each differencing order tried
  std::vector<SearchStep> path;
};

struct ArimaForecast {
  Eigen::VectorXd mean;
  Eigen::VectorXd se;
};

/// Random walk with drift: drift = mean of first differences, sigma2 = their
/// sample variance (n - 1 denominator).
ArimaSpec fit_rwd(const Eigen::VectorXd& series);

/// Gaussian maximum-likelihood fit of a fixed order via the exact
/// state-space likelihood. Throws DegenerateError when the optimizer fails.
ArimaSpec fit_arima(const Eigen::VectorXd& series, int p, int d, int q, bool constant);

/// Automatic order selection: KPSS differencing (5% level, d <= 2) and a
/// stepwise AICc search over p, q <= 5 and the constant term.
ArimaSpec auto_arima(const Eigen::VectorXd& series, ArimaDiagnostics* diagnostics = nullptr);

/// KPSS level-stationarity statistic with lag floor(4 (n/100)^(1/4)).
double kpss_statistic(const Eigen::VectorXd& series);
inline constexpr double kKpssCritical5 = 0.463;
int select_differencing(const Eigen::VectorXd& series, int max_d = 2, std::vector<double>* stats = nullptr);

Eigen::VectorXd difference(const Eigen::VectorXd& series, int d);

/// Conditional-mean forecasts for h = 1..horizon with psi-weight standard errors.
ArimaForecast forecast(const ArimaSpec& spec, const Eigen::VectorXd& series, int horizon);

/// MA(infinity) weights psi_0..psi_{n-1} of the full ARIMA operator.
Eigen::VectorXd psi_weights(const ArimaSpec& spec, int n);

/// One-step innovations of the differenced series, scaled to variance sigma2.
Eigen::VectorXd innovations(const ArimaSpec& spec, const Eigen::VectorXd& series);

/// -2 log-likelihood of the differenced series under `spec` (sigma2
/// concentrated out). Exposed for cross-checking.
double minus_two_loglik(const ArimaSpec& spec, const Eigen::VectorXd& series);

}  // namespace gfts
