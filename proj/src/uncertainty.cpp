#include "gfts/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gfts/error.hpp"
#include "gfts/random.hpp"

namespace gfts {

std::string to_string(IntervalSet::Kind k) {
  return k == IntervalSet::Kind::Pointwise ? "pointwise" : "simultaneous";
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InsufficientDataError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile probability must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

Eigen::MatrixXd insample_errors(const std::function<Eigen::VectorXd(int, int)>& forecaster,
                                const Grid& observed_log_rates, int h, int first) {
  if (h < 1) throw HorizonError("forecast horizon must be at least 1");
  const auto n = static_cast<int>(observed_log_rates.rows());
  const int m = n - h - first + 1;
  if (m < 2) {
    throw InsufficientDataError("only " + std::to_string(std::max(m, 0)) + " in-sample error curves at h=" +
                                std::to_string(h));
  }
  if (observed_log_rates.hasNaN()) throw IncompleteDataError("in-sample errors need complete observed log rates");
  Eigen::MatrixXd errors(m, observed_log_rates.cols());
  for (int i = 0; i < m; ++i) {
    const int xi = first + i;
    const Eigen::VectorXd fc = forecaster(xi, h);
    if (fc.size() != observed_log_rates.cols()) throw DimensionError("forecast curve has the wrong length");
    errors.row(i) = observed_log_rates.row(xi + h - 1) - fc.transpose();
  }
  return errors;
}

Eigen::MatrixXd insample_errors(const FtsModel& model, const Grid& observed_log_rates, int h) {
  if (observed_log_rates.cols() != model.mean.size() || observed_log_rates.rows() != model.scores.rows()) {
    throw DimensionError("observed grid does not match the fitted model");
  }
  std::vector<ArimaSpec> specs = model.score_models;
  for (int j = static_cast<int>(specs.size()); j < model.retained; ++j) {
    specs.push_back(fit_score_model(model.scores.col(j)));
  }
  auto forecaster = [&](int xi, int step) {
    Eigen::VectorXd curve = model.mean;
    for (int j = 0; j < model.retained; ++j) {
      const Eigen::VectorXd history = model.scores.col(j).head(xi);
      const double k = forecast(specs[static_cast<std::size_t>(j)], history, step).mean(step - 1);
      curve += model.components.col(j) * k;
    }
    return curve;
  };
  return insample_errors(forecaster, observed_log_rates, h, std::max(model.retained, 1));
}

Eigen::MatrixXd insample_errors(const LeeCarterModel& model, const Grid& observed_log_rates, int h) {
  if (observed_log_rates.cols() != model.a.size() || observed_log_rates.rows() != model.kappa_adjusted.size()) {
    throw DimensionError("observed grid does not match the fitted model");
  }
  const double drift = fit_rwd(model.kappa_adjusted).constant;
  auto forecaster = [&](int xi, int step) { return model.log_rates_at(model.kappa_adjusted(xi - 1) + step * drift); };
  return insample_errors(forecaster, observed_log_rates, h, 1);
}

CalibratedBand calibrate_band(const Eigen::MatrixXd& errors, double coverage, int replicates, std::uint64_t seed) {
  if (!(coverage > 0.0 && coverage < 1.0)) throw ValidationError("coverage must lie in (0, 1)");
  if (replicates < 100) throw ValidationError("at least 100 bootstrap replicates are required");
  if (errors.rows() < 2) throw InsufficientDataError("need at least two error curves");
  if (!errors.allFinite()) throw InvalidInputError("error curves contain non-finite values");
  const Eigen::Index m = errors.rows();
  const Eigen::Index p = errors.cols();

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> draws(static_cast<std::size_t>(replicates));
  for (auto& d : draws) d = static_cast<Eigen::Index>(draw_index(rng, static_cast<std::size_t>(m)));

  CalibratedBand band;
  band.gamma_lower.resize(p);
  band.gamma_upper.resize(p);
  std::vector<double> column(static_cast<std::size_t>(replicates));
  for (Eigen::Index x = 0; x < p; ++x) {
    for (std::size_t r = 0; r < draws.size(); ++r) column[r] = errors(draws[r], x);
    double lo = std::min(quantile(column, kGammaLowerQuantile), 0.0);
    double hi = std::max(quantile(column, kGammaUpperQuantile), 0.0);
    // A zero percentile cannot be scaled to cover errors of that sign.
    const double emin = errors.col(x).minCoeff();
    const double emax = errors.col(x).maxCoeff();
    if (lo == 0.0 && emin < 0.0) {
      lo = emin;
      band.gamma_fallback = true;
    }
    if (hi == 0.0 && emax > 0.0) {
      hi = emax;
      band.gamma_fallback = true;
    }
    band.gamma_lower(x) = lo;
    band.gamma_upper(x) = hi;
  }

  // Smallest multiplier putting each residual inside psi * [gamma_l, gamma_u].
  Eigen::MatrixXd need(m, p);
  for (Eigen::Index w = 0; w < m; ++w) {
    for (Eigen::Index x = 0; x < p; ++x) {
      const double e = errors(w, x);
      if (e > 0.0) {
        need(w, x) = e / band.gamma_upper(x);
      } else if (e < 0.0) {
        need(w, x) = e / band.gamma_lower(x);
      } else {
        need(w, x) = 0.0;
      }
    }
  }
  auto order_stat = [coverage](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto k = static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(v.size()) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, v.size());
    return v[k - 1];
  };
  auto covered = [](const std::vector<double>& v, double psi) {
    std::size_t c = 0;
    for (double r : v) c += r <= psi ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(v.size());
  };

  std::vector<double> points(need.data(), need.data() + need.size());
  std::vector<double> curves(static_cast<std::size_t>(m));
  for (Eigen::Index w = 0; w < m; ++w) curves[static_cast<std::size_t>(w)] = need.row(w).maxCoeff();
  band.psi_pointwise = order_stat(points);
  band.psi_simultaneous = order_stat(curves);
  band.coverage_pointwise = covered(points, band.psi_pointwise);
  band.coverage_simultaneous = covered(curves, band.psi_simultaneous);
  return band;
}

BandPair bootstrap_intervals(const Eigen::MatrixXd& errors, const Eigen::VectorXd& point, double coverage,
                             int replicates, std::uint64_t seed) {
  if (point.size() != errors.cols()) throw DimensionError("point forecast does not match the error curves");
  BandPair out;
  out.band = calibrate_band(errors, coverage, replicates, seed);
  auto make = [&](IntervalSet::Kind kind, double psi) {
    IntervalSet set;
    set.kind = kind;
    set.level = coverage;
    set.lower = point + psi * out.band.gamma_lower;
    set.upper = point + psi * out.band.gamma_upper;
    set.psi = Eigen::VectorXd::Constant(1, psi);
    return set;
  };
  out.pointwise = make(IntervalSet::Kind::Pointwise, out.band.psi_pointwise);
  out.simultaneous = make(IntervalSet::Kind::Simultaneous, out.band.psi_simultaneous);
  return out;
}

std::vector<Eigen::MatrixXd> bootstrap_paths(const Eigen::MatrixXd& point_log,
                                             const std::vector<Eigen::MatrixXd>& errors_by_horizon, int replicates,
                                             std::uint64_t seed) {
  if (replicates < 1) throw ValidationError("replicate count must be positive");
  const auto horizon = static_cast<Eigen::Index>(errors_by_horizon.size());
  if (horizon < 1 || horizon > point_log.cols()) throw DimensionError("need one error matrix per path horizon");
  std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(replicates), point_log.leftCols(horizon));
  for (Eigen::Index h = 0; h < horizon; ++h) {
    const Eigen::MatrixXd& e = errors_by_horizon[static_cast<std::size_t>(h)];
    if (e.cols() != point_log.rows() || e.rows() < 1) throw DimensionError("error curves do not match the ages");
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(h), 0));
    for (auto& path : out) {
      const auto w = static_cast<Eigen::Index>(draw_index(rng, static_cast<std::size_t>(e.rows())));
      path.col(h) += e.row(w).transpose();
    }
  }
  return out;
}

ForecastSet reconcile_bootstrap(const GroupStructure& structure, const ForecastSet& set, Method method,
                                const SummingForecast& s, const std::vector<SummingForecast>* replicate_s) {
  if (method == Method::Base) throw ValidationError("reconcile_bootstrap needs bottom-up or OLS");
  const std::size_t reps = set.replicate_count();
  for (const auto& r : set.replicates) {
    if (r.size() != reps) throw ValidationError("replicate counts differ across series");
  }
  if (set.replicates.size() != set.series.size()) throw ValidationError("every series needs replicates");
  if (replicate_s && replicate_s->size() != reps) {
    throw ValidationError("replicate summing forecasts do not match the replicate count");
  }

  ForecastSet out = method == Method::BottomUp ? bottom_up(structure, set, s) : ols_reconcile(structure, set, s);
  const std::size_t n = structure.series_count();
  const std::size_t ng = structure.group_count();
  const std::size_t nb = structure.bottom_count();
  if (reps == 0) return out;
  // Replicates may stop short of the point-forecast horizon.
  const int rep_horizon = static_cast<int>(set.replicates.front().front().cols());
  if (rep_horizon > s.horizon()) throw DimensionError("replicates run past the summing forecast horizon");
  out.replicates.assign(n, std::vector<Eigen::MatrixXd>(reps, Eigen::MatrixXd(s.age_count(), rep_horizon)));

  // Input replicate of structure series k.
  std::vector<const std::vector<Eigen::MatrixXd>*> input(n, nullptr);
  for (std::size_t i = 0; i < set.series.size(); ++i) input[structure.index_of(set.series[i])] = &set.replicates[i];
  const std::size_t need_from = method == Method::BottomUp ? ng : 0;
  for (std::size_t k = need_from; k < n; ++k) {
    if (!input[k]) throw DimensionError("missing replicates for series " + structure.series_ids()[k]);
  }

  Eigen::VectorXd vec;
  for (int h = 1; h <= rep_horizon; ++h) {
    for (int x = 0; x < s.age_count(); ++x) {
      const bool per_rep = replicate_s && s.uses_forecast_shares(x, h);
      const auto col = static_cast<Eigen::Index>(h - 1);
      if (method == Method::BottomUp) {
        vec.resize(static_cast<Eigen::Index>(nb));
        const SummingMatrix common = per_rep ? SummingMatrix() : s.slice(x, h);
        for (std::size_t r = 0; r < reps; ++r) {
          for (std::size_t b = 0; b < nb; ++b) vec(static_cast<Eigen::Index>(b)) = (*input[ng + b])[r](x, col);
          const Eigen::VectorXd all = per_rep ? bottom_up_slice((*replicate_s)[r].slice(x, h), vec)
                                              : bottom_up_slice(common, vec);
          for (std::size_t k = 0; k < ng; ++k) out.replicates[k][r](x, col) = all(static_cast<Eigen::Index>(k));
          for (std::size_t b = 0; b < nb; ++b) out.replicates[ng + b][r](x, col) = vec(static_cast<Eigen::Index>(b));
        }
      } else {
        vec.resize(static_cast<Eigen::Index>(n));
        std::optional<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>> qr;
        SummingMatrix common;
        if (!per_rep) {
          common = s.slice(x, h);
          qr.emplace(common);
          if (qr->rank() < common.cols()) {
            throw SingularDesignError("summing matrix is rank deficient at age index " + std::to_string(x) +
                                      ", h=" + std::to_string(h));
          }
        }
        for (std::size_t r = 0; r < reps; ++r) {
          for (std::size_t k = 0; k < n; ++k) vec(static_cast<Eigen::Index>(k)) = (*input[k])[r](x, col);
          const Eigen::VectorXd rec =
              per_rep ? ols_slice_structured(structure, (*replicate_s)[r].bottom_exposures(x, h), vec)
                      : Eigen::VectorXd(common * qr->solve(vec));
          for (std::size_t k = 0; k < n; ++k) out.replicates[k][r](x, col) = rec(static_cast<Eigen::Index>(k));
        }
      }
    }
  }
  return out;
}

IntervalSet replicate_intervals(const std::vector<Eigen::MatrixXd>& replicates, double level) {
  if (replicates.empty()) throw InsufficientDataError("no replicates");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("level must lie in (0, 1)");
  const Eigen::Index rows = replicates.front().rows();
  const Eigen::Index cols = replicates.front().cols();
  IntervalSet out;
  out.kind = IntervalSet::Kind::Pointwise;
  out.level = level;
  out.lower.resize(rows, cols);
  out.upper.resize(rows, cols);
  std::vector<double> cell(replicates.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (std::size_t r = 0; r < replicates.size(); ++r) cell[r] = replicates[r](i, j);
      out.lower(i, j) = quantile(cell, 0.5 * (1.0 - level));
      out.upper(i, j) = quantile(cell, 0.5 * (1.0 + level));
    }
  }
  return out;
}

}  // namespace gfts
