"""Transforms between death densities and unconstrained logit-CDF curves.

A density row (counts summing to the radix) becomes a CDF by cumulative
summation, and the CDF's first A-1 coordinates are mapped through the
logit.  The last CDF entry is identically one and carries no
information, so it is dropped and restored on inversion.  The inverse
applies the logistic function, appends the final one, repairs any
non-monotone forecast rows by sorting (monotone rearrangement), and
differences back to densities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from mortdist.panel import (
    AgeGrid,
    DeathDensitySeries,
    PanelDataError,
    normalize_to_probability,
    _readonly,
)

#: CDF values are clipped to [eps, 1 - eps] before the logit
CLIP_EPSILON = 1.0e-10


@dataclass(eq=False)
class CdfSeries:
    """Rowwise CDFs over the age grid; last column is exactly one."""

    grid: AgeGrid
    years: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape[1] != len(self.grid):
            raise PanelDataError("CDF width does not match the age grid")
        if np.any(values[:, -1] != 1.0):
            raise PanelDataError("last CDF column must be exactly one")
        if np.any(np.diff(values, axis=1) < 0):
            raise PanelDataError("CDF rows must be nondecreasing")
        self.years = _readonly(np.asarray(self.years, dtype=int))
        self.values = _readonly(values)


@dataclass(eq=False)
class LogitCdfSeries:
    """Unconstrained logit-CDF rows over the first A-1 ages."""

    grid: AgeGrid
    years: np.ndarray
    values: np.ndarray
    clip_epsilon: float = CLIP_EPSILON

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape[1] != len(self.grid):
            raise PanelDataError("logit width does not match the truncated age grid")
        if not np.all(np.isfinite(values)):
            raise PanelDataError("logit values must be finite")
        self.years = _readonly(np.asarray(self.years, dtype=int))
        self.values = _readonly(values)


def cdf_from_probabilities(probabilities: np.ndarray) -> np.ndarray:
    """Cumulative sums of probability rows, with the last entry pinned to one."""
    p = np.asarray(probabilities, dtype=float)
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise PanelDataError("probability rows must sum to one within 1e-9")
    if np.any(p < 0):
        raise PanelDataError("probabilities must be nonnegative")
    d = np.cumsum(p, axis=-1)
    d[..., -1] = 1.0
    return d


def logit_from_cdf(cdf: np.ndarray, clip_epsilon: float = CLIP_EPSILON) -> np.ndarray:
    """Logit of the CDF with the final (constant) column dropped.

    Values are clipped to ``[clip_epsilon, 1 - clip_epsilon]`` so that
    exact zeros and ones stay finite.
    """
    d = np.asarray(cdf, dtype=float)[..., :-1]
    d = np.clip(d, clip_epsilon, 1.0 - clip_epsilon)
    return np.log(d) - np.log1p(-d)


def density_from_logit(values: np.ndarray, radix: float) -> np.ndarray:
    """Invert logit-CDF rows back to death counts summing to the radix.

    The logistic map is applied, a final column of ones appended, each
    row sorted into nondecreasing order (monotone rearrangement, a
    no-op for rows that are already valid CDFs), and first differences
    scaled by the radix.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
        squeeze = True
    else:
        squeeze = False
    d = expit(x)
    full = np.concatenate([d, np.ones((d.shape[0], 1))], axis=1)
    full = np.sort(full, axis=1)
    dens = np.diff(full, axis=1, prepend=0.0) * radix
    return dens[0] if squeeze else dens


def to_cdf(probabilities: np.ndarray, grid: AgeGrid, years) -> CdfSeries:
    """Wrap probability rows as a :class:`CdfSeries`."""
    return CdfSeries(grid=grid, years=years, values=cdf_from_probabilities(probabilities))


def to_logit(cdf: CdfSeries, clip_epsilon: float = CLIP_EPSILON) -> LogitCdfSeries:
    """Move a CDF series to the unconstrained logit scale."""
    reduced = AgeGrid(cdf.grid.ages[:-1])
    return LogitCdfSeries(
        grid=reduced,
        years=cdf.years,
        values=logit_from_cdf(cdf.values, clip_epsilon),
        clip_epsilon=clip_epsilon,
    )


def from_logit(series: LogitCdfSeries, radix: float = 1.0e5) -> DeathDensitySeries:
    """Invert a logit-CDF series to a death-count series.

    The age grid is extended by the one age that was dropped when the
    final CDF column was removed.
    """
    full_ages = np.append(series.grid.ages, series.grid.ages[-1] + 1)
    dens = density_from_logit(series.values, radix)
    return DeathDensitySeries(
        grid=AgeGrid(full_ages), years=series.years, values=dens, radix=radix
    )


def series_to_logit(
    series: DeathDensitySeries, clip_epsilon: float = CLIP_EPSILON
) -> LogitCdfSeries:
    """Full pipeline from a death-count series to the logit scale."""
    probs = normalize_to_probability(series)
    return to_logit(to_cdf(probs, series.grid, series.years), clip_epsilon)
