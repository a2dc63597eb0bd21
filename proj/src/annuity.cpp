#include "gfts/annuity.hpp"

#include <cmath>
#include <sstream>

#include "gfts/error.hpp"
#include "gfts/format.hpp"
#include "gfts/uncertainty.hpp"

namespace gfts {

Eigen::VectorXd survival_from_diagonal(const Eigen::VectorXd& diagonal) {
  Eigen::VectorXd out(diagonal.size());
  double s = 1.0;
  for (Eigen::Index j = 0; j < diagonal.size(); ++j) {
    if (is_missing(diagonal(j)) || diagonal(j) < 0.0) throw InvalidInputError("mortality rate missing or negative");
    s *= std::exp(-diagonal(j));
    out(j) = s;
  }
  return out;
}

Eigen::VectorXd survival_curve(const Eigen::MatrixXd& rates, int age_index, int maturity) {
  if (maturity < 1) throw HorizonError("maturity must be at least 1");
  if (age_index < 0 || age_index + maturity > rates.rows() || maturity > rates.cols()) {
    throw HorizonError("cohort diagonal from age index " + std::to_string(age_index) + " over " +
                       std::to_string(maturity) + " years leaves the " + std::to_string(rates.rows()) + "x" +
                       std::to_string(rates.cols()) + " forecast grid");
  }
  Eigen::VectorXd diagonal(maturity);
  for (int j = 0; j < maturity; ++j) diagonal(j) = rates(age_index + j, j);
  return survival_from_diagonal(diagonal);
}

double annuity_price(const Eigen::VectorXd& survival, double eta, int maturity) {
  if (maturity < 0 || maturity > survival.size()) throw HorizonError("survival curve shorter than the maturity");
  if (eta < 0.0) throw ValidationError("interest rate must be nonnegative");
  double price = 0.0;
  for (int tau = 1; tau <= maturity; ++tau) price += std::exp(-eta * tau) * survival(tau - 1);
  return price;
}

double shortfall(double policies, double benefit, double price, double underpricing_pct) {
  return policies * benefit * price * underpricing_pct / 100.0;
}

std::pair<double, double> annuity_interval(const std::vector<Eigen::MatrixXd>& replicates, double eta, int age_index,
                                           int maturity, double level) {
  if (replicates.empty()) throw InsufficientDataError("no replicate paths");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must lie in (0, 1)");
  std::vector<double> prices;
  prices.reserve(replicates.size());
  for (const auto& r : replicates) prices.push_back(annuity_price(survival_curve(r, age_index, maturity), eta, maturity));
  return {quantile(prices, 0.5 * (1.0 - level)), quantile(prices, 0.5 * (1.0 + level))};
}

std::vector<AnnuityQuote> quote_table(const std::string& series, const std::string& method,
                                      const Eigen::MatrixXd& rates, const AgeGrid& ages,
                                      const std::vector<int>& quote_ages, const std::vector<int>& maturities,
                                      double eta, const std::vector<Eigen::MatrixXd>* replicates, double level,
                                      int max_age) {
  std::vector<AnnuityQuote> out;
  for (int age : quote_ages) {
    const int index = ages.index_of(age);
    if (index < 0) throw ValidationError("quote age " + std::to_string(age) + " is not on the age grid");
    for (int maturity : maturities) {
      AnnuityQuote q;
      q.series = series;
      q.method = method;
      q.age = age;
      q.maturity = maturity;
      q.rate = eta;
      if (age + maturity <= max_age) {
        q.price = annuity_price(survival_curve(rates, index, maturity), eta, maturity);
        if (replicates && !replicates->empty() && maturity <= replicates->front().cols()) {
          q.interval = annuity_interval(*replicates, eta, index, maturity, level);
        }
      }
      out.push_back(std::move(q));
    }
  }
  return out;
}

std::string quotes_to_csv(const std::vector<AnnuityQuote>& quotes) {
  std::ostringstream out;
  out << "series,method,age,maturity,rate,price,lower,upper\n";
  for (const auto& q : quotes) {
    out << q.series << ',' << q.method << ',' << q.age << ',' << q.maturity << ',' << format_double(q.rate) << ','
        << (q.price ? format_double(*q.price) : "NA") << ','
        << (q.interval ? format_double(q.interval->first) : "NA") << ','
        << (q.interval ? format_double(q.interval->second) : "NA") << '\n';
  }
  return out.str();
}

}  // namespace gfts
