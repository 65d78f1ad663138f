"""Shared builders for synthetic death-density data."""

from __future__ import annotations

import numpy as np
import pytest

from mortdist.panel import AgeGrid, DeathDensityPanel, DeathDensitySeries

RADIX = 1.0e5


def density_rows(rng: np.random.Generator, n: int, n_ages: int, radix: float = RADIX):
    """Random strictly positive rows, each summing to ``radix`` exactly."""
    raw = rng.uniform(0.05, 1.0, size=(n, n_ages))
    return raw / raw.sum(axis=1, keepdims=True) * radix


def drifting_counts(
    rng: np.random.Generator,
    n_years: int,
    n_ages: int,
    mode: float,
    drift: float = 0.1,
    width: float = 4.0,
    noise: float = 0.1,
    radix: float = RADIX,
) -> np.ndarray:
    """A smooth hump whose mode drifts linearly, plus seeded jitter."""
    ages = np.arange(n_ages)
    rows = np.empty((n_years, n_ages))
    for t in range(n_years):
        m = mode + drift * t + rng.normal(0.0, noise)
        hump = np.exp(-0.5 * ((ages - m) / width) ** 2) + 1e-3
        hump = hump * np.exp(rng.normal(0.0, 0.02, size=n_ages))
        rows[t] = hump / hump.sum() * radix
    return rows


def build_panel(
    rng: np.random.Generator,
    groups: list[str],
    n_years: int = 12,
    n_ages: int = 9,
    first_year: int = 2000,
    national: str | None = None,
    radix: float = RADIX,
) -> DeathDensityPanel:
    grid = AgeGrid(np.arange(n_ages))
    years = np.arange(first_year, first_year + n_years)
    series = {}
    for i, g in enumerate(groups):
        for j, s in enumerate(("F", "M")):
            counts = drifting_counts(
                rng, n_years, n_ages, mode=3.0 + 0.7 * i + 0.4 * j, radix=radix
            )
            series[(g, s)] = DeathDensitySeries(grid, years, counts, radix=radix)
    return DeathDensityPanel(list(groups), series, national=national)


def last_value_forecaster(scores: np.ndarray, horizon: int) -> np.ndarray:
    """Cheap stand-in for the smoothing forecaster: repeat the last score."""
    scores = np.asarray(scores, dtype=float)
    return np.tile(scores[-1], (horizon, 1)) if scores.ndim == 2 else np.repeat(
        scores[-1], horizon
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def small_panel(rng) -> DeathDensityPanel:
    return build_panel(rng, ["a", "b", "nat"], national="nat")
