#include "gfts/leecarter.hpp"

#include <cmath>

#include "gfts/error.hpp"

namespace gfts {

Grid LeeCarterModel::fitted_log_rates(bool adjusted) const {
  const Eigen::VectorXd& k = adjusted ? kappa_adjusted : kappa;
  return (k * b.transpose()).rowwise() + a.transpose();
}

LeeCarterModel fit_lee_carter(const MortalitySurface& surface) {
  const Grid& y = surface.log_rates();
  if (y.hasNaN()) throw IncompleteDataError("Lee-Carter fit of " + surface.series_id() + " needs complete log rates");
  if (!y.allFinite()) throw InvalidInputError("non-finite log rates in " + surface.series_id());

  LeeCarterModel model;
  model.a = y.colwise().mean().transpose();
  const Grid centred = y.rowwise() - model.a.transpose();
  const Eigen::Index p = y.cols();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double s0 = svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
  if (!(s0 > 1e-13 * std::max(1.0, y.cwiseAbs().maxCoeff()))) {
    // No variation over time: any loading works, the index is zero.
    model.b = Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
    model.kappa = Eigen::VectorXd::Zero(y.rows());
  } else {
    const Eigen::VectorXd v = svd.matrixV().col(0);
    const double total = v.sum();
    if (std::abs(total) < 1e-12) {
      throw DegenerateError("Lee-Carter loading of " + surface.series_id() + " sums to zero; cannot normalize");
    }
    model.b = v / total;
    model.kappa = svd.matrixU().col(0) * (s0 * total);
    model.kappa.array() -= model.kappa.mean();  // exact in theory; remove rounding drift
  }
  model.kappa_adjusted = model.kappa;
  model.residuals = y - model.fitted_log_rates();
  if (model.kappa.size() >= 3) model.rwd = fit_rwd(model.kappa);
  return model;
}

Eigen::VectorXd adjust_kappa(const LeeCarterModel& model, const MortalitySurface& surface) {
  const Grid& deaths = surface.deaths();
  const Grid& exposures = surface.exposures();
  if (deaths.rows() != model.kappa.size() || deaths.cols() != model.a.size()) {
    throw DimensionError("surface does not match the fitted Lee-Carter model");
  }
  Eigen::VectorXd out(model.kappa.size());
  for (Eigen::Index t = 0; t < deaths.rows(); ++t) {
    double target = 0.0;
    std::vector<Eigen::Index> cells;
    for (Eigen::Index x = 0; x < deaths.cols(); ++x) {
      if (is_missing(deaths(t, x)) || is_missing(exposures(t, x))) continue;
      target += deaths(t, x);
      cells.push_back(x);
    }
    auto excess = [&](double k) {
      double s = 0.0;
      for (Eigen::Index x : cells) s += exposures(t, x) * std::exp(model.a(x) + model.b(x) * k);
      return s - target;
    };
    const double k0 = model.kappa(t);
    double lo = k0 - 10.0;
    double hi = k0 + 10.0;
    double flo = excess(lo);
    double fhi = excess(hi);
    while (flo * fhi > 0.0 && hi - k0 < 50.0) {
      lo -= 10.0;
      hi += 10.0;
      flo = excess(lo);
      fhi = excess(hi);
    }
    if (flo * fhi > 0.0) {
      throw BracketingError("cannot bracket adjusted kappa for " + surface.series_id() + " year " +
                            std::to_string(surface.years()[static_cast<std::size_t>(t)]));
    }
    if (flo == 0.0) {
      out(t) = lo;
      continue;
    }
    if (fhi == 0.0) {
      out(t) = hi;
      continue;
    }
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double fmid = excess(mid);
      if (fmid == 0.0) {
        lo = hi = mid;
        break;
      }
      if ((fmid < 0.0) == (flo < 0.0)) {
        lo = mid;
        flo = fmid;
      } else {
        hi = mid;
      }
    }
    out(t) = 0.5 * (lo + hi);
  }
  return out;
}

LeeCarterModel with_adjusted_kappa(LeeCarterModel model, const MortalitySurface& surface) {
  model.kappa_adjusted = adjust_kappa(model, surface);
  if (model.kappa_adjusted.size() >= 3) model.rwd = fit_rwd(model.kappa_adjusted);
  return model;
}

Eigen::MatrixXd forecast_lee_carter(const LeeCarterModel& model, int horizon) {
  if (horizon < 1) throw HorizonError("forecast horizon must be at least 1");
  const ArimaSpec rwd = fit_rwd(model.kappa_adjusted);
  const double last = model.kappa_adjusted(model.kappa_adjusted.size() - 1);
  Eigen::MatrixXd out(model.a.size(), horizon);
  for (int h = 1; h <= horizon; ++h) out.col(h - 1) = model.log_rates_at(last + h * rwd.constant);
  return out;
}

}  // namespace gfts
