"""Additive-error exponential smoothing for component-score series.

Three non-seasonal members are fit by maximizing the Gaussian one-step
likelihood and compared by AICc:

* ``ANN`` -- simple exponential smoothing (level only),
* ``AAN`` -- additive trend,
* ``AAdN`` -- additive damped trend.

Smoothing weights live in (0, 1), the trend weight below the level
weight, and the damping factor in (0.8, 0.98).  Series are standardized
internally before optimization so that fits are equivariant under
shifts and positive rescalings of the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

FAMILIES = ("ANN", "AAN", "AAdN")

#: open box (0, 1) for the level weight, kept off the boundary
_ALPHA_LO, _ALPHA_HI = 1.0e-4, 1.0 - 1.0e-4
#: trend weight parametrized as a fraction of the level weight
_FRAC_LO, _FRAC_HI = 1.0e-4, 1.0 - 1.0e-4
PHI_BOUNDS = (0.8, 0.98)

_N_RESTARTS = 3
_RESTART_SEED = 20240915  # fixed so repeated fits are bit-identical
_SIGMA2_FLOOR = 1.0e-300

_PARAM_COUNT = {"ANN": 3, "AAN": 5, "AAdN": 6}  # smoothing + states + variance


@dataclass(eq=False)
class EtsFit:
    """Fitted smoothing model with final states ready for forecasting."""

    family: str
    alpha: float
    beta: float | None
    phi: float | None
    initial_level: float
    initial_trend: float | None
    level: float
    trend: float | None
    sigma2: float
    loglik: float
    aicc: float
    n_obs: int
    fitted: np.ndarray
    residuals: np.ndarray
    fallback: bool = False


def _sse_ann(z: list, alpha: float, l0: float) -> float:
    l = l0
    sse = 0.0
    for zt in z:
        e = zt - l
        sse += e * e
        l += alpha * e
    return sse


def _sse_aan(z: list, alpha: float, beta: float, l0: float, b0: float) -> float:
    l, b = l0, b0
    sse = 0.0
    for zt in z:
        f = l + b
        e = zt - f
        sse += e * e
        l = f + alpha * e
        b = b + beta * e
    return sse


def _sse_aad(
    z: list, alpha: float, beta: float, phi: float, l0: float, b0: float
) -> float:
    l, b = l0, b0
    sse = 0.0
    for zt in z:
        f = l + phi * b
        e = zt - f
        sse += e * e
        l = f + alpha * e
        b = phi * b + beta * e
    return sse


def _filter(z: np.ndarray, family: str, params: dict) -> tuple:
    """One-step filter returning (fitted, residuals, final level, final trend)."""
    n = z.size
    fitted = np.empty(n)
    l = params["l0"]
    b = params.get("b0")
    alpha = params["alpha"]
    beta = params.get("beta")
    phi = params.get("phi")
    for t in range(n):
        if family == "ANN":
            f = l
        elif family == "AAN":
            f = l + b
        else:
            f = l + phi * b
        fitted[t] = f
        e = z[t] - f
        l = f + alpha * e
        if family == "AAN":
            b = b + beta * e
        elif family == "AAdN":
            b = phi * b + beta * e
    return fitted, z - fitted, l, b


def _neg2ll(sse: float, n: int) -> float:
    sigma2 = max(sse / n, _SIGMA2_FLOOR)
    return n * (np.log(2.0 * np.pi * sigma2) + 1.0)


def _fit_member(z: np.ndarray, family: str) -> dict:
    """Minimize the one-step SSE of one member over its parameter box."""
    zl = z.tolist()
    n = len(zl)
    slope = (zl[-1] - zl[0]) / (n - 1)

    if family == "ANN":
        start = [0.3, zl[0]]
        bounds = [(_ALPHA_LO, _ALPHA_HI), (-np.inf, np.inf)]

        def objective(x):
            return _sse_ann(zl, x[0], x[1])

    elif family == "AAN":
        start = [0.3, 0.1, zl[0] - slope, slope]
        bounds = [
            (_ALPHA_LO, _ALPHA_HI),
            (_FRAC_LO, _FRAC_HI),
            (-np.inf, np.inf),
            (-np.inf, np.inf),
        ]

        def objective(x):
            return _sse_aan(zl, x[0], x[0] * x[1], x[2], x[3])

    else:
        start = [0.3, 0.1, 0.9, zl[0] - slope, slope]
        bounds = [
            (_ALPHA_LO, _ALPHA_HI),
            (_FRAC_LO, _FRAC_HI),
            PHI_BOUNDS,
            (-np.inf, np.inf),
            (-np.inf, np.inf),
        ]

        def objective(x):
            return _sse_aad(zl, x[0], x[0] * x[1], x[2], x[3], x[4])

    rng = np.random.default_rng(_RESTART_SEED)
    starts = [np.asarray(start, dtype=float)]
    for _ in range(_N_RESTARTS - 1):
        x = np.asarray(start, dtype=float)
        x[0] = rng.uniform(0.05, 0.95)
        if family != "ANN":
            x[1] = rng.uniform(0.05, 0.95)
        if family == "AAdN":
            x[2] = rng.uniform(*PHI_BOUNDS)
        x[-1] += rng.uniform(-0.5, 0.5)
        if family != "ANN":
            x[-2] += rng.uniform(-0.5, 0.5)
        starts.append(x)

    best_x, best_sse = None, np.inf
    for x0 in starts:
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={"fatol": 1e-8, "xatol": 1e-6, "maxfev": 2000},
        )
        if res.fun < best_sse:
            best_sse, best_x = float(res.fun), np.asarray(res.x, dtype=float)

    if family == "ANN":
        params = {"alpha": best_x[0], "l0": best_x[1]}
    elif family == "AAN":
        params = {
            "alpha": best_x[0],
            "beta": best_x[0] * best_x[1],
            "l0": best_x[2],
            "b0": best_x[3],
        }
    else:
        params = {
            "alpha": best_x[0],
            "beta": best_x[0] * best_x[1],
            "phi": best_x[2],
            "l0": best_x[3],
            "b0": best_x[4],
        }
    return {"family": family, "params": params, "sse": best_sse}


def _build_fit(
    y: np.ndarray, mu: float, scale: float, member: dict, fallback: bool = False
) -> EtsFit:
    family = member["family"]
    params = member["params"]
    z = (y - mu) / scale
    fitted_z, resid_z, l_z, b_z = _filter(z, family, params)
    fitted = mu + scale * fitted_z
    residuals = y - fitted
    n = y.size
    sigma2 = float(np.mean(residuals**2))
    neg2ll = _neg2ll(sigma2 * n, n)
    p = _PARAM_COUNT[family]
    aicc = neg2ll + 2.0 * p * n / max(n - p - 1, 1)
    return EtsFit(
        family=family,
        alpha=float(params["alpha"]),
        beta=float(params["beta"]) if "beta" in params else None,
        phi=float(params["phi"]) if "phi" in params else None,
        initial_level=float(mu + scale * params["l0"]),
        initial_trend=float(scale * params["b0"]) if "b0" in params else None,
        level=float(mu + scale * l_z),
        trend=float(scale * b_z) if b_z is not None else None,
        sigma2=sigma2,
        loglik=-0.5 * neg2ll,
        aicc=float(aicc),
        n_obs=int(n),
        fitted=fitted,
        residuals=residuals,
        fallback=fallback,
    )


def fit_ets(series: np.ndarray) -> EtsFit:
    """Fit all members to a score series and keep the lowest AICc.

    Parameters
    ----------
    series : ndarray, shape (n,)
        Finite observations.  With fewer than four of them no member is
        identifiable, so the fit falls back to ``ANN`` with a level
        weight of 0.5 and is flagged.

    Returns
    -------
    EtsFit
        Ties in AICc resolve toward the smaller member (ANN first).
    """
    y = np.asarray(series, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("series is empty")
    if not np.all(np.isfinite(y)):
        raise ValueError("series must be finite")
    n = y.size

    if n < 4:
        member = {"family": "ANN", "params": {"alpha": 0.5, "l0": float(y[0])}}
        return _build_fit(y, 0.0, 1.0, member, fallback=True)

    mu = float(y.mean())
    scale = float(y.std())
    if scale == 0.0 or not np.isfinite(scale):
        scale = 1.0
    z = (y - mu) / scale

    best = None
    for family in FAMILIES:
        member = _fit_member(z, family)
        fit = _build_fit(y, mu, scale, member)
        if best is None or fit.aicc < best.aicc:
            best = fit
    return best


def forecast_ets(fit: EtsFit, horizon: int) -> np.ndarray:
    """Point forecasts from the fitted model's final states.

    ``ANN`` extrapolates flat, ``AAN`` linearly, and ``AAdN`` with
    geometrically damped trend increments.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    steps = np.arange(1, horizon + 1)
    if fit.family == "ANN":
        return np.full(horizon, fit.level)
    if fit.family == "AAN":
        return fit.level + steps * fit.trend
    damped = np.cumsum(fit.phi ** steps)
    return fit.level + fit.trend * damped
