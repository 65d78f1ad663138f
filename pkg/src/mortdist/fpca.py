"""Functional principal component analysis on discretized curves.

Curves are rows sampled on a regular unit-spaced grid, so integrals are
plain sums and the discrete Karhunen-Loeve decomposition reduces to the
singular value decomposition of the centered data matrix.  Eigenvalues
use the n-1 covariance divisor.  Component counts are chosen either by
the eigenvalue-ratio criterion or as a fixed number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

#: eigenvalues below this multiple of the leading one are treated as zero
EIGENVALUE_REL_FLOOR = 1.0e-12


def _fix_signs(phi: np.ndarray) -> np.ndarray:
    """Orient each component so its coordinate sum is nonnegative.

    When the sum is exactly zero the first nonzero coordinate is made
    positive instead.
    """
    phi = phi.copy()
    for row in phi:
        total = row.sum()
        if total < 0.0:
            row *= -1.0
        elif total == 0.0:
            nz = np.flatnonzero(row)
            if nz.size and row[nz[0]] < 0.0:
                row *= -1.0
    return phi


@dataclass(eq=False)
class FpcaModel:
    """Fitted decomposition ``data = mean + scores @ eigenfunctions + residuals``.

    Attributes
    ----------
    mean : ndarray, shape (m,)
        Columnwise average curve.
    eigenvalues : ndarray, shape (K,)
        Nonincreasing positive variances (covariance divisor n-1).
    eigenfunctions : ndarray, shape (K, m)
        Orthonormal rows under the unit-weight inner product.
    scores : ndarray, shape (n, K)
        Projections of the centered rows onto the eigenfunctions.
    residuals : ndarray, shape (n, m)
        Remainder making the decomposition exact.
    """

    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    scores: np.ndarray
    residuals: np.ndarray

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def n_obs(self) -> int:
        return int(self.scores.shape[0])

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total == 0.0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    def reconstruct(self, k: int | None = None) -> np.ndarray:
        """Mean plus the first ``k`` component contributions.

        With ``k`` omitted all components and the residuals are added
        back, reproducing the input exactly.
        """
        if k is None:
            return (
                self.mean
                + self.scores @ self.eigenfunctions
                + self.residuals
            )
        k = min(int(k), self.n_components)
        return self.mean + self.scores[:, :k] @ self.eigenfunctions[:k]


def fit_fpca(values: np.ndarray) -> FpcaModel:
    """Decompose a curve matrix into mean, components, scores, residuals.

    Parameters
    ----------
    values : ndarray, shape (n, m)
        At least two rows of finite samples on a shared grid.

    Returns
    -------
    FpcaModel
        Components whose eigenvalue exceeds ``EIGENVALUE_REL_FLOOR``
        times the leading eigenvalue; at most n-1 of them.  A matrix of
        identical rows yields zero components, empty scores, and zero
        residuals.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 2:
        raise ValueError("expected a 2-d matrix of curves")
    n, m = y.shape
    if n < 2:
        raise ValueError("need at least two curves")
    if not np.all(np.isfinite(y)):
        raise ValueError("curve values must be finite")

    mean = y.mean(axis=0)
    centered = y - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)

    # singular values at the rounding floor of forming `centered` are noise
    noise = max(n, m) * np.finfo(float).eps * max(np.linalg.norm(y), 1.0)
    lam = s**2 / (n - 1)
    keep = s > noise
    if lam.size and lam[0] > 0.0:
        keep &= lam > EIGENVALUE_REL_FLOOR * lam[0]
    k = int(np.count_nonzero(keep))

    phi = _fix_signs(vt[:k])
    scores = centered @ phi.T
    residuals = centered - scores @ phi
    return FpcaModel(
        mean=mean,
        eigenvalues=lam[:k],
        eigenfunctions=phi,
        scores=scores,
        residuals=residuals,
    )


@dataclass(frozen=True)
class ComponentSelection:
    """Outcome of a component-count decision.

    ``eta`` and ``k_max`` are populated for the eigenvalue-ratio method
    and carry the threshold and search bound actually used.
    """

    method: str
    k: int
    k_max: int | None = None
    eta: float | None = None
    clamped: bool = False


def select_k_evr(eigenvalues: np.ndarray, n_obs: int) -> ComponentSelection:
    """Eigenvalue-ratio choice of the component count.

    With eigenvalues sorted nonincreasing, the criterion evaluated at k
    is ``lam[k+1]/lam[k]`` while ``lam[k]/lam[0]`` stays at or above the
    threshold ``eta = 1/log(max(lam[0], n_obs))``, and 1 once the ratio
    falls below it.  The search runs up to ``k_max``, the number of
    eigenvalues at or above the mean of the computed eigenvalues.  Ties
    resolve to the smallest k.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("eigenvalues must be a nonempty 1-d array")
    if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be positive and nonincreasing")
    if n_obs < 2:
        raise ValueError("n_obs must be at least 2")

    base = max(float(lam[0]), float(n_obs))
    eta = 1.0 / np.log(base)
    k_max = int(np.count_nonzero(lam >= lam.mean()))
    padded = np.append(lam, 0.0)

    best_k, best_val = 1, np.inf
    for k in range(1, k_max + 1):
        if lam[k - 1] / lam[0] >= eta:
            val = padded[k] / lam[k - 1]
        else:
            val = 1.0
        if val < best_val:
            best_k, best_val = k, val
    return ComponentSelection(method="evr", k=best_k, k_max=k_max, eta=float(eta))


def select_k_fixed(k: int, n_available: int) -> ComponentSelection:
    """Fixed component count, clamped to what the fit provides."""
    if k < 1:
        raise ValueError("fixed component count must be at least 1")
    clamped = k > n_available
    if clamped:
        import warnings

        warnings.warn(
            f"requested {k} components but only {n_available} are available",
            stacklevel=2,
        )
    return ComponentSelection(method="fixed", k=min(k, n_available), clamped=clamped)


@dataclass(frozen=True)
class SelectionPolicy:
    """How to pick the number of retained components.

    ``method`` is ``"evr"`` (eigenvalue ratio) or ``"fixed"``; ``k`` is
    the count used by the fixed method (default 6).
    """

    method: str = "evr"
    k: int = 6

    def __post_init__(self) -> None:
        if self.method not in ("evr", "fixed"):
            raise ValueError(f"unknown selection method {self.method!r}")

    def select(self, eigenvalues: np.ndarray, n_obs: int) -> ComponentSelection:
        n_avail = int(np.asarray(eigenvalues).size)
        if n_avail == 0:
            return ComponentSelection(method=self.method, k=0)
        if self.method == "fixed":
            return select_k_fixed(self.k, n_avail)
        return select_k_evr(eigenvalues, n_obs)


def forecast_components(
    model: FpcaModel,
    selection: ComponentSelection,
    horizon: int,
    score_forecaster: Callable[[np.ndarray, int], np.ndarray],
) -> np.ndarray:
    """Forecast curves by extrapolating the leading component scores.

    Each of the first ``selection.k`` score series is passed to
    ``score_forecaster(series, horizon)``; the returned paths weight
    the eigenfunctions on top of the mean curve.  With zero components
    the forecast is the repeated mean.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    k = min(selection.k, model.n_components)
    out = np.tile(model.mean, (horizon, 1))
    for j in range(k):
        beta = np.asarray(score_forecaster(model.scores[:, j], horizon), dtype=float)
        if beta.shape != (horizon,):
            raise ValueError("score forecaster must return one value per step")
        out += np.outer(beta, model.eigenfunctions[j])
    return out
