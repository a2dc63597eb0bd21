#include "gfts/fpca.hpp"

#include <cmath>

#include "gfts/error.hpp"

namespace gfts {

Grid FtsModel::fitted() const {
  Grid out = scores * components.transpose();
  return out.rowwise() + mean.transpose();
}

int select_J(const Eigen::VectorXd& eigenvalues, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw ValidationError("delta must lie in (0, 1]");
  double total = 0.0;
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
    if (eigenvalues(j) > 0.0) total += eigenvalues(j);
  }
  if (!(total > 0.0)) throw DegenerateError("eigenvalue spectrum has no positive values");
  double running = 0.0;
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
    if (eigenvalues(j) > 0.0) running += eigenvalues(j);
    // Relative slack absorbs rounding in the cumulative sum.
    if (running / total >= delta - 1e-12) return static_cast<int>(j + 1);
  }
  return static_cast<int>(eigenvalues.size());
}

ArimaSpec fit_score_model(const Eigen::VectorXd& scores, ArimaDiagnostics* diagnostics) {
  if (scores.size() >= 8) return auto_arima(scores, diagnostics);
  if (scores.size() >= 3) return fit_rwd(scores);
  ArimaSpec naive;
  naive.d = 1;
  return naive;
}

FtsModel fpca_fit(const Grid& log_rates, const ComponentSelector& selector, bool fit_score_models) {
  if (log_rates.hasNaN()) throw IncompleteDataError("functional PCA needs complete smoothed log rates");
  if (!log_rates.allFinite()) throw InvalidInputError("non-finite smoothed log rates");
  const Eigen::Index n = log_rates.rows();
  const Eigen::Index p = log_rates.cols();
  if (n < 3) throw InsufficientDataError("functional PCA needs at least 3 years");

  FtsModel model;
  model.mean = log_rates.colwise().mean().transpose();
  const Grid centred = log_rates.rowwise() - model.mean.transpose();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  model.eigenvalues = sv.array().square() / static_cast<double>(n - 1);

  // Singular values at rounding level carry no signal.
  const double tiny = 1e-12 * std::max(1.0, sv.size() ? sv(0) : 0.0);
  Eigen::VectorXd spectrum = model.eigenvalues;
  for (Eigen::Index j = 0; j < sv.size(); ++j) {
    if (sv(j) <= tiny) spectrum(j) = 0.0;
  }
  int rank = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j) rank += sv(j) > tiny ? 1 : 0;

  int retained = 0;
  if (rank > 0) {
    if (selector.kind == ComponentSelector::Kind::Threshold) {
      retained = select_J(spectrum, selector.delta);
    } else {
      if (selector.fixed < 1) throw ValidationError("fixed component count must be positive");
      retained = static_cast<int>(std::min<Eigen::Index>({selector.fixed, n - 1, p}));
    }
  }
  model.retained = retained;
  model.components = svd.matrixV().leftCols(retained);
  model.scores = svd.matrixU().leftCols(retained) * sv.head(retained).asDiagonal();

  // Orient each component so its scores trend upward in time.
  const double tbar = 0.5 * static_cast<double>(n - 1);
  for (int j = 0; j < retained; ++j) {
    double cov = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) cov += (static_cast<double>(t) - tbar) * model.scores(t, j);
    bool flip = false;
    if (std::abs(cov) > 1e-12 * (model.scores.col(j).cwiseAbs().sum() + 1e-300)) {
      flip = cov < 0.0;
    } else {
      for (Eigen::Index x = 0; x < p; ++x) {
        if (std::abs(model.components(x, j)) > 1e-12) {
          flip = model.components(x, j) < 0.0;
          break;
        }
      }
    }
    if (flip) {
      model.components.col(j) *= -1.0;
      model.scores.col(j) *= -1.0;
    }
  }

  model.residuals = centred - model.scores * model.components.transpose();
  if (fit_score_models) {
    model.score_models.resize(static_cast<std::size_t>(retained));
    model.score_search.resize(static_cast<std::size_t>(retained));
    for (int j = 0; j < retained; ++j) {
      model.score_models[static_cast<std::size_t>(j)] =
          fit_score_model(model.scores.col(j), &model.score_search[static_cast<std::size_t>(j)]);
    }
  }
  return model;
}

Eigen::MatrixXd fts_forecast(const FtsModel& model, int horizon) {
  if (horizon < 1) throw HorizonError("forecast horizon must be at least 1");
  Eigen::MatrixXd out = model.mean.replicate(1, horizon);
  for (int j = 0; j < model.retained; ++j) {
    const Eigen::VectorXd series = model.scores.col(j);
    const ArimaSpec spec = j < static_cast<int>(model.score_models.size())
                               ? model.score_models[static_cast<std::size_t>(j)]
                               : fit_score_model(series);
    const Eigen::VectorXd k = forecast(spec, series, horizon).mean;
    out += model.components.col(j) * k.transpose();
  }
  return out;
}

double r_squared(const Grid& observed, const Grid& fitted) {
  if (observed.rows() != fitted.rows() || observed.cols() != fitted.cols()) {
    throw DimensionError("observed and fitted grids differ in shape");
  }
  if (fitted.hasNaN()) throw IncompleteDataError("fitted log rates contain missing cells");
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index x = 0; x < observed.cols(); ++x) {
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index t = 0; t < observed.rows(); ++t) {
      if (!is_missing(observed(t, x))) {
        sum += observed(t, x);
        ++count;
      }
    }
    if (count == 0) continue;
    const double mean_rate = std::exp(sum / count);
    for (Eigen::Index t = 0; t < observed.rows(); ++t) {
      if (is_missing(observed(t, x))) continue;
      const double m = std::exp(observed(t, x));
      num += std::pow(m - std::exp(fitted(t, x)), 2);
      den += std::pow(m - mean_rate, 2);
    }
  }
  if (!(den > 0.0)) throw DegenerateError("observed rates do not vary over time; R^2 undefined");
  return 1.0 - num / den;
}

}  // namespace gfts
