"""Pointwise prediction intervals from holdout forecast residuals.

Residual banks collect, per horizon, the density-scale errors of a
point forecaster over an expanding holdout window.  Two calibrations
turn a bank into interval half-widths:

* standard-deviation scaling: a single multiplier ``xi`` applied to the
  coordinatewise residual spread, chosen on a fixed grid so empirical
  coverage lands closest to nominal;
* split-conformal: the per-coordinate empirical quantile of absolute
  residuals.

Bounds are symmetric around the point forecast, except that lower
bounds are clamped at zero to stay on the death-count scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: multiplier grid searched by the spread calibration
XI_GRID = np.round(np.arange(0.0, 5.0 + 1e-9, 0.01), 2)


@dataclass(eq=False)
class ResidualBank:
    """Holdout residuals (actual minus forecast) for one horizon."""

    horizon: int
    residuals: np.ndarray  # (M, A)

    def __post_init__(self) -> None:
        res = np.asarray(self.residuals, dtype=float)
        if res.ndim != 2 or res.shape[0] == 0:
            raise ValueError(f"horizon {self.horizon}: residual bank is empty")
        if not np.all(np.isfinite(res)):
            raise ValueError(f"horizon {self.horizon}: residuals must be finite")
        self.residuals = res

    @property
    def size(self) -> int:
        return int(self.residuals.shape[0])


def collect_residuals(actuals, forecasts, horizon: int) -> ResidualBank:
    """Stack holdout (actual - forecast) rows into a bank."""
    a = np.asarray(actuals, dtype=float)
    f = np.asarray(forecasts, dtype=float)
    if a.shape != f.shape:
        raise ValueError("actuals and forecasts must align")
    if a.ndim == 1:
        a = a[None, :]
        f = f[None, :]
    return ResidualBank(horizon=horizon, residuals=a - f)


@dataclass(eq=False)
class SdCalibration:
    """Spread-scaled half-width: ``xi * gamma(u)`` per coordinate."""

    gamma: np.ndarray
    xi: float
    alpha: float
    coverage: float
    horizon: int
    degenerate: bool = False

    @property
    def width(self) -> np.ndarray:
        return self.xi * self.gamma


def calibrate_sd(
    bank: ResidualBank, alpha: float, grid: np.ndarray | None = None
) -> SdCalibration:
    """Pick the spread multiplier whose bank coverage is closest to nominal.

    ``gamma`` is the coordinatewise standard deviation of the bank.  A
    residual is covered when ``-xi*gamma <= eps <= xi*gamma``; the
    multiplier minimizing ``|coverage - (1 - alpha)|`` over the grid is
    returned, ties resolving to the smallest (narrowest intervals).  A
    bank of at least two rows is required.  An all-zero spread still
    calibrates (coverage counts exact zeros) but is flagged degenerate.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must be in [0, 1)")
    if bank.size < 2:
        raise ValueError("spread calibration needs at least two residual rows")
    grid = XI_GRID if grid is None else np.asarray(grid, dtype=float)

    gamma = bank.residuals.std(axis=0)
    absres = np.abs(bank.residuals)
    # (n_grid,) empirical coverage over all (row, coordinate) cells
    covered = absres[None, :, :] <= grid[:, None, None] * gamma[None, None, :]
    coverage = covered.mean(axis=(1, 2))
    objective = np.abs(coverage - (1.0 - alpha))
    best = int(np.argmin(objective))  # first minimum = smallest xi
    return SdCalibration(
        gamma=gamma,
        xi=float(grid[best]),
        alpha=float(alpha),
        coverage=float(coverage[best]),
        horizon=bank.horizon,
        degenerate=bool(np.all(gamma == 0.0)),
    )


@dataclass(eq=False)
class ConformalCalibration:
    """Per-coordinate absolute-residual quantile half-width."""

    q: np.ndarray
    alpha: float
    horizon: int

    @property
    def width(self) -> np.ndarray:
        return self.q


def calibrate_conformal(bank: ResidualBank, alpha: float) -> ConformalCalibration:
    """Empirical ``100(1 - alpha)%`` quantile of absolute residuals.

    Quantiles use the linear-interpolation convention (type 7); a
    single-row bank returns its own absolute residuals.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must be in [0, 1)")
    q = np.quantile(np.abs(bank.residuals), 1.0 - alpha, axis=0, method="linear")
    return ConformalCalibration(q=q, alpha=float(alpha), horizon=bank.horizon)


@dataclass(eq=False)
class IntervalForecast:
    """Lower/upper density bounds around a point forecast."""

    lower: np.ndarray
    upper: np.ndarray
    method: str
    alpha: float
    horizon: int


def build_interval(point_density: np.ndarray, calibration) -> IntervalForecast:
    """Symmetric bounds ``point -/+ width`` with the lower edge floored at 0."""
    point = np.asarray(point_density, dtype=float)
    width = calibration.width
    if point.shape[-1] != width.shape[-1]:
        raise ValueError("point forecast and calibration widths must align")
    method = "sd" if isinstance(calibration, SdCalibration) else "conformal"
    return IntervalForecast(
        lower=np.maximum(point - width, 0.0),
        upper=point + width,
        method=method,
        alpha=calibration.alpha,
        horizon=calibration.horizon,
    )
