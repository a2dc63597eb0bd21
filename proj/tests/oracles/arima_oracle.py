"""Frozen ARIMA reference values from statsmodels.

Writes tests/data/arima_fixtures.json. Re-run only to regenerate fixtures:
    python3 tests/oracles/arima_oracle.py
"""
import itertools
import json
import math
import pathlib
import warnings

import numpy as np
from scipy import optimize
from statsmodels.tsa.statespace.sarimax import SARIMAX
from statsmodels.tsa.stattools import kpss
from statsmodels.tsa.arima_process import arma2ma

warnings.simplefilter("ignore")
OUT = pathlib.Path(__file__).resolve().parents[1] / "data" / "arima_fixtures.json"


def series_bank():
    rng = np.random.default_rng(20240611)
    bank = {}
    e = rng.standard_normal(60)
    # ARMA(1,1) around 2.0
    x = np.zeros(60)
    for t in range(60):
        x[t] = (0.6 * x[t - 1] if t else 0.0) + e[t] + (0.3 * e[t - 1] if t else 0.0)
    bank["arma11"] = (2.0 + x[:40]).tolist()
    # random walk with drift
    bank["rwd"] = np.cumsum(-0.8 + 0.5 * rng.standard_normal(40)).tolist()
    # integrated ARMA(1,1) with drift
    e = rng.standard_normal(45)
    w = np.zeros(45)
    for t in range(45):
        w[t] = 0.2 + (0.5 * (w[t - 1] - 0.2) if t else 0.0) + e[t] - (0.4 * e[t - 1] if t else 0.0)
    bank["ima"] = np.cumsum(w[:40]).tolist()
    return bank


def diff(x, d):
    x = np.asarray(x, float)
    for _ in range(d):
        x = np.diff(x)
    return x


def concentrated_m2ll(w, ar, ma):
    # Stationary initialization; without enforcement statsmodels starts diffuse.
    mod = SARIMAX(w, order=(len(ar), 0, len(ma)), trend="n", concentrate_scale=True)
    return -2.0 * mod.loglike(np.r_[ar, ma])


def fixed_cases(bank):
    cases = []
    specs = [("arma11", 0, [0.5], [0.2], 2.0),
             ("arma11", 0, [0.3, -0.2], [], 1.9),
             ("arma11", 0, [], [0.4, 0.1], 2.05),
             ("ima", 1, [0.5], [-0.4], 0.2),
             ("ima", 1, [0.2, 0.1, -0.1], [0.3, 0.2], 0.15),
             ("rwd", 1, [], [], -0.8)]
    for name, d, ar, ma, mu in specs:
        w = diff(bank[name], d) - mu
        cases.append({"series": name, "d": d, "ar": ar, "ma": ma, "constant": mu,
                      "minus_two_loglik": concentrated_m2ll(w, ar, ma)})
    return cases


MAX_PARTIAL = 0.9999


def partials_to_coefficients(r):
    phi = []
    for j, rj in enumerate(r):
        phi = [phi[i] - rj * phi[j - 1 - i] for i in range(j)] + [rj]
    return np.array(phi)


def mle_cases(bank):
    # Same parameter space as the fitter: AR and MA partial autocorrelations
    # bounded by MAX_PARTIAL, MA coefficients are minus the mapped partials.
    # The likelihood itself is statsmodels' exact Kalman likelihood.
    cases = []
    for name, d, p, q in [("arma11", 0, 1, 1), ("arma11", 0, 2, 0), ("ima", 1, 1, 1), ("ima", 1, 0, 2),
                          ("rwd", 1, 1, 0)]:
        w = diff(bank[name], d)
        mod = SARIMAX(w, exog=np.ones(len(w)), order=(p, 0, q), trend="n", concentrate_scale=True)

        def params(z):
            return np.r_[z[0], partials_to_coefficients(z[1:1 + p]), -partials_to_coefficients(z[1 + p:])]

        def objective(z):
            return -mod.loglike(params(z))

        bounds = [(None, None)] + [(-MAX_PARTIAL, MAX_PARTIAL)] * (p + q)
        best = None
        for corner in itertools.product((-0.9, 0.0, 0.9), repeat=p + q):
            z0 = np.r_[np.mean(w), corner]
            res = optimize.minimize(objective, z0, method="L-BFGS-B", bounds=bounds,
                                    options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 5000})
            res = optimize.minimize(objective, res.x, method="Powell", bounds=bounds,
                                    options={"xtol": 1e-12, "ftol": 1e-15, "maxiter": 20000})
            if best is None or res.fun < best.fun:
                best = res
        llf = -best.fun
        k = p + q + 2
        n = len(w)
        cases.append({"series": name, "p": p, "d": d, "q": q, "loglik": llf,
                      "aicc": -2.0 * llf + 2 * k + 2 * k * (k + 1) / (n - k - 1),
                      "constant": float(best.x[0])})
    return cases


def kpss_cases(bank):
    out = []
    for name, x in bank.items():
        for d in (0, 1):
            y = diff(x, d)
            lags = int(math.floor(4 * (len(y) / 100) ** 0.25))
            stat = kpss(y, regression="c", nlags=lags)[0]
            out.append({"series": name, "d": d, "statistic": float(stat)})
    return out


def forecast_cases(bank):
    out = []
    for name, d, ar, ma, mu, sigma2 in [("arma11", 0, [0.5], [0.2], 2.0, 0.9),
                                         ("ima", 1, [0.5], [-0.4], 0.2, 1.1),
                                         ("ima", 1, [0.3, 0.2], [0.25], 0.1, 0.7)]:
        x = np.asarray(bank[name])
        w = diff(x, d) - mu
        mod = SARIMAX(w, order=(len(ar), 0, len(ma)), trend="n",
                      enforce_stationarity=False, enforce_invertibility=False)
        res = mod.filter(np.r_[ar, ma, sigma2])
        wf = res.forecast(10) + mu
        mean = np.cumsum(wf) + x[-1] if d == 1 else wf
        arpoly = np.r_[1.0, -np.asarray(ar)]
        if d == 1:
            arpoly = np.convolve(arpoly, [1.0, -1.0])
        psi = arma2ma(arpoly, np.r_[1.0, ma], lags=10)
        se = np.sqrt(sigma2 * np.cumsum(psi ** 2))
        out.append({"series": name, "d": d, "ar": ar, "ma": ma, "constant": mu, "sigma2": sigma2,
                    "mean": mean.tolist(), "se": se.tolist(), "psi": psi.tolist()})
    return out


def main():
    bank = series_bank()
    data = {"series": bank, "fixed": fixed_cases(bank), "mle": mle_cases(bank),
            "kpss": kpss_cases(bank), "forecast": forecast_cases(bank)}
    OUT.write_text(json.dumps(data, indent=1) + "\n")


if __name__ == "__main__":
    main()
