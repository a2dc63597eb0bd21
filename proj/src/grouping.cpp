#include "gfts/grouping.hpp"

#include <cmath>
#include <random>

#include "gfts/error.hpp"
#include "gfts/fpca.hpp"
#include "gfts/random.hpp"

namespace gfts {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string slice_name(int age_index, int h) {
  return "age index " + std::to_string(age_index) + ", h=" + std::to_string(h);
}

void check_slice(const SummingForecast& s, int age_index, int h) {
  if (age_index < 0 || age_index >= s.age_count() || h < 1 || h > s.horizon()) {
    throw DimensionError("summing slice out of range: " + slice_name(age_index, h));
  }
}

// Bottom-level forecasts reordered to the structure's bottom order.
std::vector<const Eigen::MatrixXd*> bottom_rates(const GroupStructure& structure, const ForecastSet& set) {
  std::vector<const Eigen::MatrixXd*> out(structure.bottom_count(), nullptr);
  for (std::size_t i = 0; i < set.series.size(); ++i) {
    if (!structure.contains(set.series[i])) {
      throw ReferenceError("forecast series " + set.series[i] + " is not in the structure");
    }
    const std::size_t k = structure.index_of(set.series[i]);
    if (structure.is_bottom(k)) out[k - structure.group_count()] = &set.rates[i];
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    if (!out[b]) throw DimensionError("missing forecasts for bottom series " + structure.bottom_series()[b]);
  }
  return out;
}

std::vector<const Eigen::MatrixXd*> all_rates(const GroupStructure& structure, const ForecastSet& set) {
  std::vector<const Eigen::MatrixXd*> out(structure.series_count(), nullptr);
  for (std::size_t i = 0; i < set.series.size(); ++i) {
    if (!structure.contains(set.series[i])) {
      throw ReferenceError("forecast series " + set.series[i] + " is not in the structure");
    }
    out[structure.index_of(set.series[i])] = &set.rates[i];
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!out[k]) throw DimensionError("missing forecasts for series " + structure.series_ids()[k]);
  }
  return out;
}

void check_shapes(const std::vector<const Eigen::MatrixXd*>& rates, const SummingForecast& s) {
  for (const auto* m : rates) {
    if (m->rows() != s.age_count() || m->cols() != s.horizon()) {
      throw DimensionError("forecast grid does not match the summing forecast (" + std::to_string(m->rows()) + "x" +
                           std::to_string(m->cols()) + " vs " + std::to_string(s.age_count()) + "x" +
                           std::to_string(s.horizon()) + ")");
    }
  }
}

ForecastSet empty_all(const GroupStructure& structure, const ForecastSet& like, Method method, int ages) {
  ForecastSet out;
  out.horizon = like.horizon;
  out.method = method;
  out.model = like.model;
  out.series = structure.series_ids();
  out.rates.assign(structure.series_count(), Eigen::MatrixXd(ages, like.horizon));
  return out;
}

}  // namespace

SummingMatrix build_summing_matrix(const GroupStructure& structure, const Eigen::VectorXd& bottom_exposures) {
  const auto nb = static_cast<Eigen::Index>(structure.bottom_count());
  if (bottom_exposures.size() != nb) throw DimensionError("exposure vector does not match the bottom series");
  for (Eigen::Index b = 0; b < nb; ++b) {
    if (is_missing(bottom_exposures(b)) || bottom_exposures(b) < 0.0) {
      throw InvalidInputError("bottom exposure of " + structure.bottom_series()[static_cast<std::size_t>(b)] +
                              " is missing or negative");
    }
  }
  const auto ng = static_cast<Eigen::Index>(structure.group_count());
  SummingMatrix s = SummingMatrix::Zero(ng + nb, nb);
  for (Eigen::Index g = 0; g < ng; ++g) {
    const SeriesGroup& group = structure.groups()[static_cast<std::size_t>(g)];
    double total = 0.0;
    for (std::size_t b : group.members) total += bottom_exposures(static_cast<Eigen::Index>(b));
    if (!(total > 0.0)) throw DegenerateError("zero exposure for group " + group.id);
    for (std::size_t b : group.members) {
      s(g, static_cast<Eigen::Index>(b)) = bottom_exposures(static_cast<Eigen::Index>(b)) / total;
    }
  }
  s.bottomRows(nb).setIdentity();
  return s;
}

SummingForecast SummingForecast::from_shares(const GroupStructure& structure, Eigen::MatrixXd last_observed,
                                             Eigen::MatrixXd base_shares) {
  const auto nb = static_cast<Eigen::Index>(structure.bottom_count());
  if (last_observed.cols() != nb || base_shares.rows() != nb) {
    throw DimensionError("exposure inputs do not match the bottom series");
  }
  if (base_shares.cols() < 1) throw HorizonError("summing forecast needs a horizon of at least 1");
  SummingForecast out;
  out.mode_ = Mode::Shares;
  out.horizon_ = static_cast<int>(base_shares.cols());
  out.ages_ = static_cast<int>(last_observed.rows());
  out.structure_ = std::make_shared<const GroupStructure>(structure);
  out.observed_ = std::make_shared<const Eigen::MatrixXd>(std::move(last_observed));
  out.shares_ = std::move(base_shares);
  return out;
}

SummingForecast SummingForecast::from_exposures(const GroupStructure& structure,
                                                std::vector<Eigen::MatrixXd> per_horizon) {
  if (per_horizon.empty()) throw HorizonError("summing forecast needs a horizon of at least 1");
  const auto nb = static_cast<Eigen::Index>(structure.bottom_count());
  for (const auto& m : per_horizon) {
    if (m.cols() != nb || m.rows() != per_horizon.front().rows()) {
      throw DimensionError("exposure grids do not match the bottom series");
    }
  }
  SummingForecast out;
  out.mode_ = Mode::Exposures;
  out.horizon_ = static_cast<int>(per_horizon.size());
  out.ages_ = static_cast<int>(per_horizon.front().rows());
  out.structure_ = std::make_shared<const GroupStructure>(structure);
  out.per_horizon_ = std::make_shared<const std::vector<Eigen::MatrixXd>>(std::move(per_horizon));
  return out;
}

SummingForecast SummingForecast::fixed(SummingMatrix s, int ages, int horizon) {
  if (horizon < 1 || ages < 1) throw HorizonError("summing forecast needs positive ages and horizon");
  SummingForecast out;
  out.mode_ = Mode::Fixed;
  out.horizon_ = horizon;
  out.ages_ = ages;
  out.fixed_ = std::move(s);
  return out;
}

SummingForecast SummingForecast::with_base_shares(Eigen::MatrixXd base_shares) const {
  if (mode_ != Mode::Shares) throw ValidationError("summing forecast is not share based");
  if (base_shares.rows() != shares_.rows() || base_shares.cols() != shares_.cols()) {
    throw DimensionError("replicate shares do not match the point shares");
  }
  SummingForecast out = *this;
  out.shares_ = std::move(base_shares);
  return out;
}

bool SummingForecast::uses_forecast_shares(int age_index, int h) const {
  return mode_ == Mode::Shares && age_index < h;
}

Eigen::VectorXd SummingForecast::bottom_exposures(int age_index, int h) const {
  check_slice(*this, age_index, h);
  switch (mode_) {
    case Mode::Shares:
      if (age_index >= h) return observed_->row(age_index - h).transpose();
      return shares_.col(h - age_index - 1);
    case Mode::Exposures:
      return (*per_horizon_)[static_cast<std::size_t>(h - 1)].row(age_index).transpose();
    case Mode::Fixed:
      break;
  }
  throw ValidationError("fixed summing forecast has no exposures");
}

SummingMatrix SummingForecast::slice(int age_index, int h) const {
  check_slice(*this, age_index, h);
  if (mode_ == Mode::Fixed) return fixed_;
  try {
    return build_summing_matrix(*structure_, bottom_exposures(age_index, h));
  } catch (const Error& e) {
    throw DegenerateError(std::string(e.what()) + " (" + slice_name(age_index, h) + ")");
  }
}

Eigen::Index SummingForecast::rows() const {
  return mode_ == Mode::Fixed ? fixed_.rows() : static_cast<Eigen::Index>(structure_->series_count());
}

Eigen::Index SummingForecast::cols() const {
  return mode_ == Mode::Fixed ? fixed_.cols() : static_cast<Eigen::Index>(structure_->bottom_count());
}

SummingForecast ExposureRatioForecast::summing() const {
  return SummingForecast::from_shares(*structure, last_observed, shares);
}

std::vector<Eigen::MatrixXd> ExposureRatioForecast::bootstrap_shares(int replicates, std::uint64_t seed) const {
  if (replicates < 1) throw ValidationError("replicate count must be positive");
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(replicates), shares);
  if (models.empty()) return out;
  const Eigen::Index nb = shares.rows();
  const int horizon = static_cast<int>(shares.cols());
  for (Eigen::Index b = 0; b < nb; ++b) {
    const ArimaSpec& spec = models[static_cast<std::size_t>(b)];
    const Eigen::VectorXd z = history.col(b);
    const Eigen::VectorXd e = innovations(spec, z);
    if (e.size() == 0 || spec.sigma2 <= 0.0) continue;
    const Eigen::VectorXd psi = psi_weights(spec, horizon);
    const Eigen::VectorXd zhat = forecast(spec, z, horizon).mean;
    for (int r = 0; r < replicates; ++r) {
      std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(r)));
      Eigen::VectorXd draw(horizon);
      for (int h = 0; h < horizon; ++h) draw(h) = e(static_cast<Eigen::Index>(draw_index(rng, e.size())));
      for (int h = 0; h < horizon; ++h) {
        double shock = 0.0;
        for (int j = 0; j <= h; ++j) shock += psi(j) * draw(h - j);
        out[static_cast<std::size_t>(r)](b, h) = logistic(zhat(h) + shock);
      }
    }
  }
  for (auto& m : out) {
    for (Eigen::Index h = 0; h < m.cols(); ++h) m.col(h) /= m.col(h).sum();
  }
  return out;
}

ExposureRatioForecast forecast_exposure_ratios(const GroupStructure& structure,
                                               const std::vector<Grid>& bottom_exposures, int horizon) {
  if (horizon < 1) throw HorizonError("forecast horizon must be at least 1");
  if (bottom_exposures.size() != structure.bottom_count()) {
    throw DimensionError("need one exposure history per bottom series");
  }
  const Eigen::Index years = bottom_exposures.front().rows();
  const Eigen::Index ages = bottom_exposures.front().cols();
  if (years < 1 || ages < 1) throw InsufficientDataError("empty exposure history");
  for (const auto& g : bottom_exposures) {
    if (g.rows() != years || g.cols() != ages) throw DimensionError("exposure histories are not aligned");
  }
  const auto nb = static_cast<Eigen::Index>(structure.bottom_count());

  ExposureRatioForecast out;
  out.structure = std::make_shared<const GroupStructure>(structure);
  out.last_observed.resize(ages, nb);
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Grid& e = bottom_exposures[static_cast<std::size_t>(b)];
    for (Eigen::Index x = 0; x < ages; ++x) {
      const double v = e(years - 1, x);
      if (is_missing(v) || v < 0.0) {
        throw IncompleteDataError("last observed exposure missing for " +
                                  structure.bottom_series()[static_cast<std::size_t>(b)]);
      }
      out.last_observed(x, b) = v;
    }
  }

  if (nb == 1) {
    out.shares = Eigen::MatrixXd::Ones(1, horizon);
    return out;
  }

  out.history.resize(years, nb);
  for (Eigen::Index t = 0; t < years; ++t) {
    double total = 0.0;
    for (Eigen::Index b = 0; b < nb; ++b) {
      const double v = bottom_exposures[static_cast<std::size_t>(b)](t, 0);
      if (is_missing(v)) throw IncompleteDataError("base-age exposure missing in year index " + std::to_string(t));
      total += v;
    }
    for (Eigen::Index b = 0; b < nb; ++b) {
      const double p = bottom_exposures[static_cast<std::size_t>(b)](t, 0) / total;
      if (!(p > 0.0 && p < 1.0)) {
        throw ValidationError("base-age exposure share of " + structure.bottom_series()[static_cast<std::size_t>(b)] +
                              " lies outside (0, 1)");
      }
      out.history(t, b) = logit(p);
    }
  }

  out.shares.resize(nb, horizon);
  out.models.resize(static_cast<std::size_t>(nb));
  for (Eigen::Index b = 0; b < nb; ++b) {
    const Eigen::VectorXd z = out.history.col(b);
    ArimaSpec spec;
    if (years >= 8) {
      spec = auto_arima(z);
    } else {
      spec = fit_score_model(z);
      out.notes.push_back("short share history for " + structure.bottom_series()[static_cast<std::size_t>(b)] +
                          "; used " + spec.label());
    }
    const Eigen::VectorXd zhat = forecast(spec, z, horizon).mean;
    for (int h = 0; h < horizon; ++h) out.shares(b, h) = logistic(zhat(h));
    out.models[static_cast<std::size_t>(b)] = spec;
  }
  for (int h = 0; h < horizon; ++h) out.shares.col(h) /= out.shares.col(h).sum();
  return out;
}

Eigen::VectorXd bottom_up_slice(const SummingMatrix& s, const Eigen::VectorXd& bottom) {
  if (s.cols() != bottom.size()) throw DimensionError("bottom forecasts do not match the summing matrix");
  // Plain left-to-right sums, so results equal a direct summation bit for bit.
  Eigen::VectorXd out = Eigen::VectorXd::Zero(s.rows());
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) out(i) += s(i, j) * bottom(j);
  }
  return out;
}

Eigen::VectorXd ols_slice(const SummingMatrix& s, const Eigen::VectorXd& all, const std::string& where) {
  if (s.rows() != all.size()) throw DimensionError("base forecasts do not match the summing matrix");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(s);
  if (qr.rank() < s.cols()) {
    throw SingularDesignError("summing matrix is rank deficient" + (where.empty() ? std::string() : " at " + where));
  }
  const Eigen::VectorXd beta = qr.solve(all);
  return s * beta;
}

Eigen::VectorXd ols_slice_structured(const GroupStructure& structure, const Eigen::VectorXd& bottom_exposures,
                                     const Eigen::VectorXd& all) {
  const auto nb = static_cast<Eigen::Index>(structure.bottom_count());
  const auto ng = static_cast<Eigen::Index>(structure.group_count());
  if (bottom_exposures.size() != nb || all.size() != nb + ng) {
    throw DimensionError("inputs do not match the structure");
  }
  // S = [A; I], so S'S = I + sum_g a_g a_g' and S'R = R_bottom + sum_g a_g R_g.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(nb, nb);
  Eigen::VectorXd rhs = all.tail(nb);
  std::vector<std::vector<double>> weights(static_cast<std::size_t>(ng));
  for (Eigen::Index g = 0; g < ng; ++g) {
    const auto& members = structure.groups()[static_cast<std::size_t>(g)].members;
    double total = 0.0;
    for (std::size_t b : members) total += bottom_exposures(static_cast<Eigen::Index>(b));
    if (!(total > 0.0)) throw DegenerateError("zero exposure for group " + structure.groups()[static_cast<std::size_t>(g)].id);
    auto& w = weights[static_cast<std::size_t>(g)];
    w.resize(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) w[i] = bottom_exposures(static_cast<Eigen::Index>(members[i])) / total;
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto bi = static_cast<Eigen::Index>(members[i]);
      rhs(bi) += w[i] * all(g);
      for (std::size_t j = 0; j < members.size(); ++j) gram(bi, static_cast<Eigen::Index>(members[j])) += w[i] * w[j];
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw SingularDesignError("normal equations are not positive definite");
  const Eigen::VectorXd beta = llt.solve(rhs);
  Eigen::VectorXd out(nb + ng);
  for (Eigen::Index g = 0; g < ng; ++g) {
    const auto& members = structure.groups()[static_cast<std::size_t>(g)].members;
    const auto& w = weights[static_cast<std::size_t>(g)];
    double v = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) v += w[i] * beta(static_cast<Eigen::Index>(members[i]));
    out(g) = v;
  }
  out.tail(nb) = beta;
  return out;
}

ForecastSet bottom_up(const GroupStructure& structure, const ForecastSet& bottom, const SummingForecast& s) {
  const auto rates = bottom_rates(structure, bottom);
  check_shapes(rates, s);
  if (s.rows() != static_cast<Eigen::Index>(structure.series_count()) ||
      s.cols() != static_cast<Eigen::Index>(structure.bottom_count())) {
    throw DimensionError("summing forecast does not match the structure");
  }
  ForecastSet out = empty_all(structure, bottom, Method::BottomUp, s.age_count());
  const auto nb = static_cast<Eigen::Index>(structure.bottom_count());
  Eigen::VectorXd b(nb);
  for (int h = 1; h <= s.horizon(); ++h) {
    for (int x = 0; x < s.age_count(); ++x) {
      for (Eigen::Index k = 0; k < nb; ++k) b(k) = (*rates[static_cast<std::size_t>(k)])(x, h - 1);
      const Eigen::VectorXd r = bottom_up_slice(s.slice(x, h), b);
      for (Eigen::Index k = 0; k < r.size(); ++k) out.rates[static_cast<std::size_t>(k)](x, h - 1) = r(k);
    }
  }
  // Bottom rows pass through untouched rather than through a 1.0 * b product.
  for (Eigen::Index k = 0; k < nb; ++k) {
    out.rates[structure.group_count() + static_cast<std::size_t>(k)] = *rates[static_cast<std::size_t>(k)];
  }
  return out;
}

ForecastSet ols_reconcile(const GroupStructure& structure, const ForecastSet& all, const SummingForecast& s) {
  const auto rates = all_rates(structure, all);
  check_shapes(rates, s);
  if (s.rows() != static_cast<Eigen::Index>(structure.series_count()) ||
      s.cols() != static_cast<Eigen::Index>(structure.bottom_count())) {
    throw DimensionError("summing forecast does not match the structure");
  }
  ForecastSet out = empty_all(structure, all, Method::Ols, s.age_count());
  const auto n = static_cast<Eigen::Index>(structure.series_count());
  Eigen::VectorXd r(n);
  for (int h = 1; h <= s.horizon(); ++h) {
    for (int x = 0; x < s.age_count(); ++x) {
      for (Eigen::Index k = 0; k < n; ++k) r(k) = (*rates[static_cast<std::size_t>(k)])(x, h - 1);
      const Eigen::VectorXd rec = ols_slice(s.slice(x, h), r, slice_name(x, h));
      for (Eigen::Index k = 0; k < n; ++k) out.rates[static_cast<std::size_t>(k)](x, h - 1) = rec(k);
    }
  }
  return out;
}

double aggregation_violation(const GroupStructure& structure, const ForecastSet& all, const SummingForecast& s) {
  const auto rates = all_rates(structure, all);
  check_shapes(rates, s);
  const auto n = static_cast<Eigen::Index>(structure.series_count());
  const auto ng = static_cast<Eigen::Index>(structure.group_count());
  const auto nb = n - ng;
  double worst = 0.0;
  Eigen::VectorXd b(nb);
  for (int h = 1; h <= s.horizon(); ++h) {
    for (int x = 0; x < s.age_count(); ++x) {
      for (Eigen::Index k = 0; k < nb; ++k) b(k) = (*rates[static_cast<std::size_t>(ng + k)])(x, h - 1);
      const Eigen::VectorXd implied = s.slice(x, h).topRows(ng) * b;
      for (Eigen::Index g = 0; g < ng; ++g) {
        worst = std::max(worst, std::abs((*rates[static_cast<std::size_t>(g)])(x, h - 1) - implied(g)));
      }
    }
  }
  return worst;
}

}  // namespace gfts
