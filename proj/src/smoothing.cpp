#include "gfts/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <gsl/gsl_bspline.h>
#include <gsl/gsl_vector.h>

#include "gfts/error.hpp"

namespace gfts {

namespace {

struct BsplineDeleter {
  void operator()(gsl_bspline_workspace* w) const { gsl_bspline_free(w); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

double sorted_quantile(const Eigen::VectorXd& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(pos));
  const auto hi = std::min<Eigen::Index>(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted(lo) + frac * (sorted(hi) - sorted(lo));
}

// Minimizes 0.5 c'Hc - g'c subject to G c >= 0 by a primal active-set
// method started from the feasible point `c`. H must be positive definite.
int solve_monotone_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::MatrixXd& G,
                      Eigen::VectorXd& c) {
  const Eigen::Index k = H.rows();
  const Eigen::Index m = G.rows();
  std::vector<Eigen::Index> working;
  std::vector<char> in_working(static_cast<std::size_t>(m), 0);
  const double gscale = 1.0 + g.lpNorm<Eigen::Infinity>();
  const int max_iter = static_cast<int>(10 * (m + k) + 100);

  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd grad = H * c - g;
    Eigen::VectorXd step = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd active(static_cast<Eigen::Index>(working.size()), k);
    for (std::size_t i = 0; i < working.size(); ++i) active.row(static_cast<Eigen::Index>(i)) = G.row(working[i]);

    if (working.empty()) {
      step = -H.ldlt().solve(grad);
    } else if (static_cast<Eigen::Index>(working.size()) < k) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(active.transpose());
      const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
      const Eigen::MatrixXd z = q.rightCols(k - static_cast<Eigen::Index>(working.size()));
      const Eigen::MatrixXd reduced = z.transpose() * H * z;
      step = -z * reduced.ldlt().solve(z.transpose() * grad);
    }

    if (step.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + c.lpNorm<Eigen::Infinity>())) {
      if (working.empty()) return 0;
      // grad = active' * mu at a constrained stationary point
      const Eigen::VectorXd mu = active.transpose().colPivHouseholderQr().solve(grad);
      Eigen::Index worst = 0;
      const double min_mu = mu.minCoeff(&worst);
      if (min_mu >= -1e-12 * gscale) return static_cast<int>(working.size());
      in_working[static_cast<std::size_t>(working[static_cast<std::size_t>(worst)])] = 0;
      working.erase(working.begin() + worst);
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_working[static_cast<std::size_t>(i)]) continue;
      const double gp = G.row(i).dot(step);
      if (gp < -1e-14) {
        const double ratio = std::max(0.0, -G.row(i).dot(c) / gp);
        if (ratio < alpha) {
          alpha = ratio;
          blocking = i;
        }
      }
    }
    c += alpha * step;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[static_cast<std::size_t>(blocking)] = 1;
    }
  }
  throw DegenerateError("monotone spline QP did not converge");
}

}  // namespace

void SmoothConfig::validate(const AgeGrid& ages) const {
  if (basis_knots < 2) throw ValidationError("basis_knots must be at least 2");
  if (penalty_order != 1 && penalty_order != 2) throw ValidationError("penalty_order must be 1 or 2");
  if (monotone_from_age < ages.front() || monotone_from_age > ages.back()) {
    throw ValidationError("monotone_from_age outside the age grid");
  }
  if (lambda && !(*lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
}

Eigen::MatrixXd bspline_design(const Eigen::VectorXd& x, int interior_knots) {
  Eigen::VectorXd sorted = x;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  const auto nbreak = static_cast<std::size_t>(interior_knots + 2);
  std::unique_ptr<gsl_vector, VectorDeleter> breaks(gsl_vector_alloc(nbreak));
  for (std::size_t i = 0; i < nbreak; ++i) {
    const double q = static_cast<double>(i) / static_cast<double>(nbreak - 1);
    gsl_vector_set(breaks.get(), i, sorted_quantile(sorted, q));
  }
  std::unique_ptr<gsl_bspline_workspace, BsplineDeleter> ws(gsl_bspline_alloc(4, nbreak));
  gsl_bspline_knots(breaks.get(), ws.get());
  // Replace the repeated end knots with ones continuing the end spacing, so
  // linear curves have linear coefficients and pay no difference penalty.
  gsl_vector* knots = ws->knots;
  const std::size_t last = knots->size - 1;
  const double lo = gsl_vector_get(breaks.get(), 0);
  const double hi = gsl_vector_get(breaks.get(), nbreak - 1);
  const double step_lo = gsl_vector_get(breaks.get(), 1) - lo;
  const double step_hi = hi - gsl_vector_get(breaks.get(), nbreak - 2);
  for (std::size_t j = 1; j <= 3; ++j) {
    gsl_vector_set(knots, 3 - j, lo - static_cast<double>(j) * step_lo);
    gsl_vector_set(knots, last - 3 + j, hi + static_cast<double>(j) * step_hi);
  }
  const std::size_t ncoef = gsl_bspline_ncoeffs(ws.get());
  std::unique_ptr<gsl_vector, VectorDeleter> b(gsl_vector_alloc(ncoef));
  Eigen::MatrixXd design(x.size(), static_cast<Eigen::Index>(ncoef));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    gsl_bspline_eval(x(i), b.get(), ws.get());
    for (std::size_t j = 0; j < ncoef; ++j) design(i, static_cast<Eigen::Index>(j)) = gsl_vector_get(b.get(), j);
  }
  return design;
}

Eigen::MatrixXd difference_matrix(int n, int order) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(n, n);
  for (int o = 0; o < order; ++o) {
    const Eigen::MatrixXd prev = d;
    d = prev.bottomRows(prev.rows() - 1) - prev.topRows(prev.rows() - 1);
  }
  return d;
}

SmoothedCurve smooth_curve(const AgeGrid& ages, const Eigen::VectorXd& log_rates, const Eigen::VectorXd& weights,
                           const SmoothConfig& config) {
  config.validate(ages);
  const auto p = static_cast<Eigen::Index>(ages.size());
  if (log_rates.size() != p || weights.size() != p) throw DimensionError("curve length differs from age grid");

  Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(p);
  int observed = 0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (is_missing(log_rates(i)) || !std::isfinite(log_rates(i))) continue;
    if (is_missing(weights(i)) || weights(i) < 0.0) throw InvalidInputError("weights must be nonnegative");
    ++observed;
    w(i) = weights(i);
    y(i) = log_rates(i);
  }
  if (observed < config.basis_knots + config.penalty_order) {
    throw InsufficientDataError("smoothing needs at least " +
                                std::to_string(config.basis_knots + config.penalty_order) +
                                " observed ages, got " + std::to_string(observed));
  }
  if (w.sum() <= 0.0) throw DegenerateWeightsError("all smoothing weights are zero");

  Eigen::VectorXd x(p);
  for (Eigen::Index i = 0; i < p; ++i) x(i) = ages.ages()[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd basis = bspline_design(x, config.basis_knots);
  const Eigen::Index k = basis.cols();
  const Eigen::MatrixXd diff = difference_matrix(static_cast<int>(k), config.penalty_order);
  const Eigen::MatrixXd penalty = diff.transpose() * diff;
  const Eigen::MatrixXd btw = basis.transpose() * w.asDiagonal();
  const Eigen::MatrixXd gram = btw * basis;
  const Eigen::VectorXd rhs = btw * y;
  const int positive = static_cast<int>((w.array() > 0.0).count());

  auto system = [&](double lambda) { return Eigen::MatrixXd(gram + lambda * penalty); };

  double lambda = 0.0;
  if (config.lambda) {
    lambda = *config.lambda;
  } else {
    double best = std::numeric_limits<double>::infinity();
    lambda = 1.0;
    for (int i = 0; i < 21; ++i) {
      const double cand = std::pow(10.0, -4.0 + 0.4 * i);
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(system(cand));
      const Eigen::VectorXd coef = ldlt.solve(rhs);
      const Eigen::VectorXd resid = y - basis * coef;
      const double rss = (w.array() * resid.array().square()).sum();
      const double trace = ldlt.solve(gram).trace();
      const double dof = positive - trace;
      if (!(dof > 1e-8)) continue;
      const double gcv = positive * rss / (dof * dof);
      if (gcv < best) {
        best = gcv;
        lambda = cand;
      }
    }
  }
  // An unpenalized fit with fewer weighted points than coefficients is
  // singular; a vanishing penalty picks the smoothest interpolant.
  if (lambda == 0.0 && positive < k) lambda = 1e-8;

  const Eigen::MatrixXd hessian = system(lambda);
  Eigen::VectorXd coef = hessian.ldlt().solve(rhs);

  std::vector<Eigen::Index> constrained;
  for (Eigen::Index i = 0; i + 1 < p; ++i) {
    if (ages.ages()[static_cast<std::size_t>(i)] >= config.monotone_from_age) constrained.push_back(i);
  }
  Eigen::MatrixXd g(static_cast<Eigen::Index>(constrained.size()), k);
  for (std::size_t r = 0; r < constrained.size(); ++r) {
    const Eigen::Index i = constrained[r];
    g.row(static_cast<Eigen::Index>(r)) = basis.row(i + 1) - basis.row(i);
  }

  int active = 0;
  if (g.rows() > 0 && (g * coef).minCoeff() < -1e-12) {
    // Constant curve at the weighted mean is feasible (B-splines sum to one).
    coef = Eigen::VectorXd::Constant(k, (w.array() * y.array()).sum() / w.sum());
    active = solve_monotone_qp(hessian, rhs, g, coef);
  }
  return SmoothedCurve{basis * coef, lambda, active};
}

Eigen::VectorXd death_weights(const Eigen::VectorXd& deaths, const Eigen::VectorXd& log_rates) {
  const Eigen::Index p = deaths.size();
  double min_positive = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!is_missing(deaths(i)) && deaths(i) > 0.0) min_positive = std::min(min_positive, deaths(i));
  }
  Eigen::VectorXd w(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (is_missing(log_rates(i))) {
      w(i) = 0.0;
    } else if (!std::isfinite(min_positive)) {
      w(i) = 1.0;
    } else if (is_missing(deaths(i)) || deaths(i) <= 0.0) {
      w(i) = min_positive;
    } else {
      w(i) = deaths(i);
    }
  }
  return w;
}

MortalitySurface smooth_surface(const MortalitySurface& surface, const SmoothConfig& config,
                                std::vector<double>* lambdas) {
  const Grid& logs = surface.log_rates();
  Grid out(logs.rows(), logs.cols());
  if (lambdas) lambdas->clear();
  for (Eigen::Index t = 0; t < logs.rows(); ++t) {
    const Eigen::VectorXd y = logs.row(t).transpose();
    Eigen::VectorXd w = death_weights(surface.deaths().row(t).transpose(), y);
    const double observed = static_cast<double>((w.array() > 0.0).count());
    if (observed > 0.0) w *= observed / w.sum();
    const std::string where =
        surface.series_id() + " year " + std::to_string(surface.years()[static_cast<std::size_t>(t)]) + ": ";
    try {
      const SmoothedCurve fit = smooth_curve(surface.ages(), y, w, config);
      out.row(t) = fit.values.transpose();
      if (lambdas) lambdas->push_back(fit.lambda);
    } catch (const InsufficientDataError& e) {
      throw InsufficientDataError(where + e.what());
    } catch (const DegenerateWeightsError& e) {
      throw DegenerateWeightsError(where + e.what());
    }
  }
  return surface.with_log_rates(std::move(out));
}

}  // namespace gfts
