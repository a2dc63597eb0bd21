#include "gfts/arima.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <tuple>

#include <gsl/gsl_multimin.h>

#include "gfts/error.hpp"

namespace gfts {

namespace {

constexpr double kMaxPartial = 0.9999;
constexpr double kVarianceFloor = 1e-300;
constexpr double kPenalty = 1e300;

// --- Nelder-Mead (GSL nmsimplex2) -----------------------------------------

using Objective = std::function<double(const Eigen::VectorXd&)>;

struct Minimum {
  Eigen::VectorXd x;
  double value = kPenalty;
  bool converged = false;
};

double gsl_trampoline(const gsl_vector* v, void* params) {
  const auto& f = *static_cast<const Objective*>(params);
  Eigen::VectorXd x(static_cast<Eigen::Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) x(static_cast<Eigen::Index>(i)) = gsl_vector_get(v, i);
  const double value = f(x);
  return std::isfinite(value) ? value : kPenalty;
}

Minimum nelder_mead(const Objective& f, const Eigen::VectorXd& start, double step, int max_iter = 4000) {
  const auto n = static_cast<std::size_t>(start.size());
  struct Cleanup {
    gsl_multimin_fminimizer* s;
    gsl_vector* x;
    gsl_vector* ss;
    ~Cleanup() {
      gsl_multimin_fminimizer_free(s);
      gsl_vector_free(x);
      gsl_vector_free(ss);
    }
  } res{gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n), gsl_vector_alloc(n),
        gsl_vector_alloc(n)};
  for (std::size_t i = 0; i < n; ++i) gsl_vector_set(res.x, i, start(static_cast<Eigen::Index>(i)));
  gsl_vector_set_all(res.ss, step);
  gsl_multimin_function fn{&gsl_trampoline, n, const_cast<Objective*>(&f)};
  gsl_multimin_fminimizer_set(res.s, &fn, res.x, res.ss);

  Minimum out;
  for (int iter = 0; iter < max_iter; ++iter) {
    if (gsl_multimin_fminimizer_iterate(res.s) != GSL_SUCCESS) break;
    const double size = gsl_multimin_fminimizer_size(res.s);
    if (gsl_multimin_test_size(size, 1e-6) == GSL_SUCCESS) {
      out.converged = true;
      break;
    }
  }
  out.x.resize(start.size());
  for (std::size_t i = 0; i < n; ++i) out.x(static_cast<Eigen::Index>(i)) = gsl_vector_get(res.s->x, i);
  out.value = res.s->fval;
  return out;
}

// --- parameter transforms ---------------------------------------------------

// Partial autocorrelations (via tanh) -> coefficients of a stationary
// 1 - sum c_i B^i (Durbin-Levinson recursion).
std::vector<double> partials_to_coefficients(const double* u, int k) {
  std::vector<double> r(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) r[static_cast<std::size_t>(i)] = std::clamp(std::tanh(u[i]), -kMaxPartial, kMaxPartial);
  std::vector<double> phi(static_cast<std::size_t>(k), 0.0);
  std::vector<double> prev(static_cast<std::size_t>(k), 0.0);
  for (int j = 0; j < k; ++j) {
    prev = phi;
    phi[static_cast<std::size_t>(j)] = r[static_cast<std::size_t>(j)];
    for (int i = 0; i < j; ++i) {
      phi[static_cast<std::size_t>(i)] =
          prev[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(j)] * prev[static_cast<std::size_t>(j - 1 - i)];
    }
  }
  return phi;
}

// --- state space ------------------------------------------------------------

// State dimension is max(p, q + 1) <= 6, so everything fits fixed storage.
constexpr int kMaxState = 6;
using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxState, 1>;
using StateMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxState, kMaxState>;

// Companion form: T has ar in column 0 and ones on the superdiagonal.
struct StateSpace {
  int r = 1;
  std::array<double, kMaxState> ar{};
  StateVec rvec;         // R = (1, ma_1, ..., ma_q)'
  StateMat initial_cov;
};

// T X for companion T: row i = ar_i * X.row(0) + X.row(i + 1).
void companion_left(const StateSpace& ss, const StateMat& x, StateMat& out) {
  const int r = ss.r;
  out.resize(r, x.cols());
  for (int i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double v = ss.ar[static_cast<std::size_t>(i)] * x(0, j);
      if (i + 1 < r) v += x(i + 1, j);
      out(i, j) = v;
    }
  }
}

StateSpace arma_state_space(const std::vector<double>& ar, const std::vector<double>& ma) {
  const int p = static_cast<int>(ar.size());
  const int q = static_cast<int>(ma.size());
  const int r = std::max(p, q + 1);
  if (r > kMaxState) throw InvalidInputError("ARMA state dimension above " + std::to_string(kMaxState));
  StateSpace ss;
  ss.r = r;
  for (int i = 0; i < p; ++i) ss.ar[static_cast<std::size_t>(i)] = ar[static_cast<std::size_t>(i)];
  ss.rvec = StateVec::Zero(r);
  ss.rvec(0) = 1.0;
  for (int j = 0; j < q; ++j) ss.rvec(j + 1) = ma[static_cast<std::size_t>(j)];

  // Stationary covariance P = T P T' + R R', solved on the r(r+1)/2 upper
  // triangle unknowns.
  const int m = r * (r + 1) / 2;
  auto idx = [r](int i, int j) {
    if (i > j) std::swap(i, j);
    return i * r - i * (i - 1) / 2 + (j - i);
  };
  auto tval = [&](int i, int k) {
    double v = (k == 0) ? ss.ar[static_cast<std::size_t>(i)] : 0.0;
    if (k == i + 1) v += 1.0;
    return v;
  };
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 21, 21> system =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 21, 21>::Identity(m, m);
  Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 21, 1> rhs(m);
  for (int i = 0; i < r; ++i) {
    for (int j = i; j < r; ++j) {
      const int row = idx(i, j);
      rhs(row) = ss.rvec(i) * ss.rvec(j);
      // (T P T')_ij = sum_k sum_l T_ik T_jl P_kl; T has at most two nonzeros per row.
      const int ks[2] = {0, i + 1};
      const int ls[2] = {0, j + 1};
      for (int a = 0; a < 2; ++a) {
        const int k = ks[a];
        if (k >= r || (a == 1 && k == 0)) continue;
        const double tik = tval(i, k);
        if (tik == 0.0) continue;
        for (int b = 0; b < 2; ++b) {
          const int l = ls[b];
          if (l >= r || (b == 1 && l == 0)) continue;
          const double tjl = tval(j, l);
          if (tjl == 0.0) continue;
          system(row, idx(k, l)) -= tik * tjl;
        }
      }
    }
  }
  const auto sol = system.partialPivLu().solve(rhs).eval();
  ss.initial_cov.resize(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) ss.initial_cov(i, j) = sol(idx(i, j));
  if (!ss.initial_cov.allFinite() || (ss.initial_cov.diagonal().array() <= 0.0).any()) {
    ss.initial_cov = 1e6 * StateMat::Identity(r, r);  // nonstationary spec: diffuse start
  }
  return ss;
}

struct FilterResult {
  double ssq = 0.0;
  double sumlogf = 0.0;
  Eigen::VectorXd predicted_state;  // a_{n+1|n}
  Eigen::VectorXd innovations;      // v_t / sqrt(F_t)
};

FilterResult kalman_filter(const StateSpace& ss, const Eigen::VectorXd& w, bool keep_innovations) {
  const int r = ss.r;
  StateVec a = StateVec::Zero(r);
  StateVec a_next(r);
  StateVec gain(r);
  StateMat pcov = ss.initial_cov;
  StateMat tmp;
  StateMat next;
  const StateMat rr = ss.rvec * ss.rvec.transpose();
  bool steady = false;
  FilterResult out;
  if (keep_innovations) out.innovations.resize(w.size());
  for (Eigen::Index t = 0; t < w.size(); ++t) {
    const double v = w(t) - a(0);
    const double f = std::max(pcov(0, 0), 1e-12);
    if (!steady) gain = pcov.col(0) / f;
    a += gain * v;
    for (int i = 0; i < r; ++i) a_next(i) = ss.ar[static_cast<std::size_t>(i)] * a(0) + (i + 1 < r ? a(i + 1) : 0.0);
    a = a_next;
    if (!steady) {
      // P <- T (P - g P_0.) T' + R R'
      tmp = pcov - gain * pcov.row(0);
      companion_left(ss, tmp, next);
      StateMat nt = next.transpose();
      companion_left(ss, nt, tmp);
      next = tmp + rr;
      // Once the covariance stops moving the gain is fixed.
      steady = (next - pcov).cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, pcov(0, 0));
      pcov = next;
    }
    out.ssq += v * v / f;
    out.sumlogf += std::log(f);
    if (keep_innovations) out.innovations(t) = v / std::sqrt(f);
  }
  out.predicted_state = a;
  return out;
}

double concentrated_objective(double ssq, double sumlogf, Eigen::Index n) {
  const double nn = static_cast<double>(n);
  const double sigma2 = std::max(ssq / nn, kVarianceFloor);
  return nn * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0) + sumlogf;
}

double conditional_ssq(const Eigen::VectorXd& w, const std::vector<double>& ar, const std::vector<double>& ma) {
  const auto p = static_cast<Eigen::Index>(ar.size());
  const auto q = static_cast<Eigen::Index>(ma.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(w.size());
  double ssq = 0.0;
  for (Eigen::Index t = p; t < w.size(); ++t) {
    double v = w(t);
    for (Eigen::Index i = 0; i < p; ++i) v -= ar[static_cast<std::size_t>(i)] * w(t - 1 - i);
    for (Eigen::Index j = 0; j < q && t - 1 - j >= 0; ++j) v -= ma[static_cast<std::size_t>(j)] * e(t - 1 - j);
    e(t) = v;
    ssq += v * v;
  }
  return ssq;
}

double mean_of(const Eigen::VectorXd& v) { return v.size() ? v.mean() : 0.0; }

double sd_of(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

bool is_constant(const Eigen::VectorXd& v) {
  if (v.size() == 0) return true;
  const double range = v.maxCoeff() - v.minCoeff();
  return range <= 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff());
}

double aicc_of(double m2ll, int k, int n) {
  if (n - k - 1 <= 0) return std::numeric_limits<double>::infinity();
  return m2ll + 2.0 * k + 2.0 * k * (k + 1.0) / static_cast<double>(n - k - 1);
}

void require_finite(const Eigen::VectorXd& series) {
  if (!series.allFinite()) throw InvalidInputError("time series contains non-finite values");
}

}  // namespace

std::string ArimaSpec::label() const {
  std::ostringstream os;
  os << "ARIMA(" << p << "," << d << "," << q << ")";
  if (include_drift) os << (d == 0 ? " with non-zero mean" : " with drift");
  return os.str();
}

Eigen::VectorXd difference(const Eigen::VectorXd& series, int d) {
  Eigen::VectorXd out = series;
  for (int k = 0; k < d; ++k) {
    if (out.size() < 2) return Eigen::VectorXd();
    out = (out.tail(out.size() - 1) - out.head(out.size() - 1)).eval();
  }
  return out;
}

ArimaSpec fit_rwd(const Eigen::VectorXd& series) {
  require_finite(series);
  if (series.size() < 3) throw InsufficientDataError("random walk with drift needs at least 3 observations");
  const Eigen::VectorXd diffs = difference(series, 1);
  ArimaSpec spec;
  spec.d = 1;
  spec.include_drift = true;
  spec.constant = diffs.mean();
  spec.sigma2 = (diffs.array() - spec.constant).square().sum() / static_cast<double>(diffs.size() - 1);
  spec.nobs = static_cast<int>(diffs.size());
  return spec;
}

double minus_two_loglik(const ArimaSpec& spec, const Eigen::VectorXd& series) {
  Eigen::VectorXd w = difference(series, spec.d);
  if (spec.include_drift && spec.d <= 1) w.array() -= spec.constant;
  const FilterResult fr = kalman_filter(arma_state_space(spec.ar, spec.ma), w, false);
  return concentrated_objective(fr.ssq, fr.sumlogf, w.size());
}

ArimaSpec fit_arima(const Eigen::VectorXd& series, int p, int d, int q, bool constant) {
  require_finite(series);
  if (p < 0 || p > 5 || q < 0 || q > 5 || d < 0 || d > 2) throw InvalidInputError("ARIMA order out of range");
  if (d > 1) constant = false;
  const Eigen::VectorXd w = difference(series, d);
  const int n = static_cast<int>(w.size());
  const int npar = p + q + (constant ? 1 : 0);
  if (n < npar + 2) throw InsufficientDataError("series too short for " + std::to_string(npar) + " parameters");

  const double center = constant ? mean_of(w) : 0.0;
  double scale = sd_of(w);
  if (!(scale > 0.0)) scale = 1.0;

  struct Decoded {
    std::vector<double> ar, ma;
    double mu = 0.0;
  };
  auto decode = [&](const Eigen::VectorXd& x) {
    Decoded dec;
    dec.ar = partials_to_coefficients(x.data(), p);
    std::vector<double> c = partials_to_coefficients(x.data() + p, q);
    dec.ma.resize(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) dec.ma[j] = -c[j];
    dec.mu = constant ? center + scale * x(p + q) : 0.0;
    return dec;
  };
  auto exact = [&](const Eigen::VectorXd& x) {
    const Decoded dec = decode(x);
    const Eigen::VectorXd wc = (w.array() - dec.mu).matrix();
    const FilterResult fr = kalman_filter(arma_state_space(dec.ar, dec.ma), wc, false);
    return concentrated_objective(fr.ssq, fr.sumlogf, n);
  };

  Eigen::VectorXd best = Eigen::VectorXd::Zero(npar);
  if (npar > 0) {
    const Objective css = [&](const Eigen::VectorXd& x) {
      const Decoded dec = decode(x);
      const Eigen::VectorXd wc = (w.array() - dec.mu).matrix();
      const double ssq = conditional_ssq(wc, dec.ar, dec.ma);
      const double m = static_cast<double>(n - p);
      return m * std::log(std::max(ssq / m, kVarianceFloor));
    };
    const Objective ml = exact;
    const Minimum start = nelder_mead(css, best, 0.2);
    Minimum m1 = nelder_mead(ml, start.x, 0.2);
    if (!(m1.value < exact(start.x))) m1 = Minimum{start.x, exact(start.x), false};
    const Minimum m2 = nelder_mead(ml, m1.x, 0.05);  // restart from the first optimum
    const Minimum& pick = (m2.value <= m1.value) ? m2 : m1;
    if (!(pick.value < kPenalty)) {
      throw DegenerateError("likelihood optimizer failed for " + std::to_string(p) + "," + std::to_string(d) +
                            "," + std::to_string(q));
    }
    best = pick.x;
  }

  const Decoded dec = decode(best);
  ArimaSpec spec;
  spec.p = p;
  spec.d = d;
  spec.q = q;
  spec.include_drift = constant;
  spec.ar = dec.ar;
  spec.ma = dec.ma;
  spec.constant = dec.mu;
  const Eigen::VectorXd wc = (w.array() - dec.mu).matrix();
  const FilterResult fr = kalman_filter(arma_state_space(dec.ar, dec.ma), wc, false);
  spec.sigma2 = fr.ssq / n;
  const double m2ll = concentrated_objective(fr.ssq, fr.sumlogf, n);
  spec.loglik = -0.5 * m2ll;
  spec.nobs = n;
  spec.aicc = aicc_of(m2ll, spec.parameter_count(), n);
  return spec;
}

double kpss_statistic(const Eigen::VectorXd& series) {
  const Eigen::Index n = series.size();
  if (n < 2) return 0.0;
  const Eigen::VectorXd e = (series.array() - series.mean()).matrix();
  const double nn = static_cast<double>(n);
  const int lags = static_cast<int>(std::floor(4.0 * std::pow(nn / 100.0, 0.25)));
  double s2 = e.squaredNorm() / nn;
  for (int s = 1; s <= lags && s < n; ++s) {
    const double cov = e.tail(n - s).dot(e.head(n - s)) / nn;
    s2 += 2.0 * (1.0 - s / (lags + 1.0)) * cov;
  }
  if (!(s2 > 1e-300)) return 0.0;
  double partial = 0.0;
  double eta = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    partial += e(t);
    eta += partial * partial;
  }
  return eta / (nn * nn * s2);
}

int select_differencing(const Eigen::VectorXd& series, int max_d, std::vector<double>* stats) {
  int d = 0;
  Eigen::VectorXd x = series;
  while (d < max_d && x.size() >= 3) {
    if (is_constant(x)) break;
    const double stat = kpss_statistic(x);
    if (stats) stats->push_back(stat);
    if (stat <= kKpssCritical5) break;
    ++d;
    x = difference(x, 1);
  }
  return d;
}

ArimaSpec auto_arima(const Eigen::VectorXd& series, ArimaDiagnostics* diagnostics) {
  require_finite(series);
  if (series.size() < 8) throw InsufficientDataError("automatic ARIMA needs at least 8 observations");
  ArimaDiagnostics local;
  ArimaDiagnostics& diag = diagnostics ? *diagnostics : local;
  diag = ArimaDiagnostics{};

  const int d = select_differencing(series, 2, &diag.kpss);
  const bool constant_allowed = d <= 1;
  const Eigen::VectorXd w = difference(series, d);

  if (is_constant(w)) {
    ArimaSpec spec;
    spec.d = d;
    spec.include_drift = constant_allowed && w(0) != 0.0;
    spec.constant = spec.include_drift ? w(0) : 0.0;
    spec.sigma2 = 0.0;
    spec.nobs = static_cast<int>(w.size());
    spec.aicc = -std::numeric_limits<double>::infinity();
    diag.path.push_back({0, d, 0, spec.include_drift, spec.aicc, true, "differenced series is constant"});
    return spec;
  }

  using Key = std::tuple<int, int, bool>;
  std::map<Key, std::optional<ArimaSpec>> visited;
  auto evaluate = [&](int p, int q, bool c) -> const std::optional<ArimaSpec>& {
    const Key key{p, q, c};
    auto it = visited.find(key);
    if (it != visited.end()) return it->second;
    SearchStep step{p, d, q, c, std::numeric_limits<double>::quiet_NaN(), false, ""};
    std::optional<ArimaSpec> fit;
    try {
      ArimaSpec s = fit_arima(series, p, d, q, c);
      if (std::isfinite(s.aicc)) {
        step.aicc = s.aicc;
        step.ok = true;
        fit = std::move(s);
      } else {
        step.note = "AICc undefined for this sample size";
      }
    } catch (const Error& e) {
      step.note = e.what();
    }
    diag.path.push_back(step);
    return visited.emplace(key, std::move(fit)).first->second;
  };
  // Lower AICc wins; ties go to fewer coefficients, then fewer MA terms, then no constant.
  auto better = [](const ArimaSpec& a, const ArimaSpec& b) {
    if (std::abs(a.aicc - b.aicc) > 1e-9 * std::max(1.0, std::abs(b.aicc))) return a.aicc < b.aicc;
    if (a.p + a.q != b.p + b.q) return a.p + a.q < b.p + b.q;
    if (a.q != b.q) return a.q < b.q;
    return !a.include_drift && b.include_drift;
  };

  std::optional<ArimaSpec> best;
  const int starts[4][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 2}};
  for (const auto& s : starts) {
    const auto& fit = evaluate(s[0], s[1], constant_allowed);
    if (fit && (!best || better(*fit, *best))) best = *fit;
  }
  if (!best) throw DegenerateError("no ARIMA candidate could be fitted");

  for (;;) {
    std::vector<std::tuple<int, int, bool>> neighbours = {
        {best->p - 1, best->q, best->include_drift},
        {best->p + 1, best->q, best->include_drift},
        {best->p, best->q - 1, best->include_drift},
        {best->p, best->q + 1, best->include_drift},
    };
    if (constant_allowed) neighbours.emplace_back(best->p, best->q, !best->include_drift);
    std::optional<ArimaSpec> step_best;
    for (const auto& [p, q, c] : neighbours) {
      if (p < 0 || q < 0 || p > 5 || q > 5) continue;
      const auto& fit = evaluate(p, q, c);
      if (fit && (!step_best || better(*fit, *step_best))) step_best = *fit;
    }
    if (!step_best || !better(*step_best, *best)) break;
    best = step_best;
  }
  return *best;
}

Eigen::VectorXd psi_weights(const ArimaSpec& spec, int n) {
  // Full AR operator: (1 - sum phi_i B^i)(1 - B)^d, stored as 1 + sum a_i B^i.
  std::vector<double> poly(1, 1.0);
  for (double phi : spec.ar) poly.push_back(-phi);
  for (int k = 0; k < spec.d; ++k) {
    std::vector<double> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += poly[i];
      next[i + 1] -= poly[i];
    }
    poly = std::move(next);
  }
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(n);
  if (n == 0) return psi;
  psi(0) = 1.0;
  for (int j = 1; j < n; ++j) {
    double v = (j <= static_cast<int>(spec.ma.size())) ? spec.ma[static_cast<std::size_t>(j - 1)] : 0.0;
    for (int i = 1; i < static_cast<int>(poly.size()) && i <= j; ++i) v -= poly[static_cast<std::size_t>(i)] * psi(j - i);
    psi(j) = v;
  }
  return psi;
}

ArimaForecast forecast(const ArimaSpec& spec, const Eigen::VectorXd& series, int horizon) {
  if (horizon < 1) throw HorizonError("forecast horizon must be at least 1");
  if (series.size() == 0) throw InsufficientDataError("cannot forecast an empty series");
  require_finite(series);
  ArimaForecast out;
  out.mean.resize(horizon);
  const int d = std::min<int>(spec.d, static_cast<int>(series.size()) - 1);
  const bool has_constant = spec.include_drift && spec.d <= 1;
  const double mu = has_constant ? spec.constant : 0.0;
  const double last = series(series.size() - 1);

  if (spec.p == 0 && spec.q == 0 && d == spec.d) {
    for (int h = 1; h <= horizon; ++h) {
      if (d == 0) {
        out.mean(h - 1) = mu;
      } else if (d == 1) {
        out.mean(h - 1) = last + h * mu;
      } else {
        const double slope = last - series(series.size() - 2);
        out.mean(h - 1) = last + h * slope;
      }
    }
  } else {
    const Eigen::VectorXd w = (difference(series, d).array() - mu).matrix();
    const StateSpace ss = arma_state_space(spec.ar, spec.ma);
    Eigen::VectorXd state = kalman_filter(ss, w, false).predicted_state;
    Eigen::VectorXd wf(horizon);
    for (int h = 0; h < horizon; ++h) {
      wf(h) = state(0) + mu;
      Eigen::VectorXd moved(state.size());
      for (Eigen::Index i = 0; i < state.size(); ++i) {
        moved(i) = ss.ar[static_cast<std::size_t>(i)] * state(0) + (i + 1 < state.size() ? state(i + 1) : 0.0);
      }
      state = moved;
    }
    // Undo differencing: integrate d times using the tail of each level.
    std::vector<Eigen::VectorXd> levels{series};
    for (int k = 1; k <= d; ++k) levels.push_back(difference(series, k));
    for (int k = d - 1; k >= 0; --k) {
      double prev = levels[static_cast<std::size_t>(k)](levels[static_cast<std::size_t>(k)].size() - 1);
      for (int h = 0; h < horizon; ++h) {
        prev += wf(h);
        wf(h) = prev;
      }
    }
    out.mean = wf;
  }

  const Eigen::VectorXd psi = psi_weights(spec, horizon);
  out.se.resize(horizon);
  double acc = 0.0;
  for (int h = 0; h < horizon; ++h) {
    acc += psi(h) * psi(h);
    out.se(h) = std::sqrt(std::max(spec.sigma2, 0.0) * acc);
  }
  return out;
}

Eigen::VectorXd innovations(const ArimaSpec& spec, const Eigen::VectorXd& series) {
  Eigen::VectorXd w = difference(series, spec.d);
  if (spec.include_drift && spec.d <= 1) w.array() -= spec.constant;
  if (w.size() == 0) return w;
  return kalman_filter(arma_state_space(spec.ar, spec.ma), w, true).innovations;
}

}  // namespace gfts
