#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gfts/domain.hpp"

namespace gfts {

/// tau-year survival probabilities, tau = 1..T, along the cohort diagonal of
/// an age x horizon rate forecast: year j-1 supplies age x+j-1.
/// Throws HorizonError when the diagonal leaves the grid.
Eigen::VectorXd survival_curve(const Eigen::MatrixXd& rates, int age_index, int maturity);

/// Same from the diagonal rates m_1..m_T directly.
Eigen::VectorXd survival_from_diagonal(const Eigen::VectorXd& diagonal);

/// sum_{tau=1..T} exp(-eta tau) * survival(tau).
double annuity_price(const Eigen::VectorXd& survival, double eta, int maturity);

/// N * B * a * gamma / 100.
double shortfall(double policies, double benefit, double price, double underpricing_pct);

/// Quantiles (1 -/+ level)/2 of the prices of each replicate rate path.
std::pair<double, double> annuity_interval(const std::vector<Eigen::MatrixXd>& replicates, double eta, int age_index,
                                           int maturity, double level);

struct AnnuityQuote {
  std::string series;
  std::string method;
  int age = 0;
  int maturity = 0;
  double rate = 0.0;
  std::optional<double> price;  // empty when age + maturity exceeds the bound
  std::optional<std::pair<double, double>> interval;
};

/// Quotes over an age x maturity grid; cells with age + maturity > max_age
/// are NA. `replicates` may be null.
std::vector<AnnuityQuote> quote_table(const std::string& series, const std::string& method,
                                      const Eigen::MatrixXd& rates, const AgeGrid& ages,
                                      const std::vector<int>& quote_ages, const std::vector<int>& maturities,
                                      double eta, const std::vector<Eigen::MatrixXd>* replicates, double level,
                                      int max_age = 100);

std::string quotes_to_csv(const std::vector<AnnuityQuote>& quotes);

}  // namespace gfts
