"""Forecasting strategies over logit-transformed death-distribution panels.

All strategies consume matrices of logit-CDF rows (years by A-1 ages),
decompose them with functional principal components, extrapolate the
scores with exponential smoothing, and rebuild future curves:

* ``ufts``   -- each (group, sex) series on its own;
* ``mfts``   -- both sexes of a group centered per sex, stacked along the
  age axis, and decomposed jointly with one shared component count;
* ``mlfts``  -- a common component from the average of the two centered
  sex series plus per-sex components on what remains;
* ``fanova`` -- grand mean, group effects, and sex effects removed, the
  interaction remainder forecast per group like ``mfts``;
* ``hdfpca`` -- per-group decompositions whose score panels are reduced
  across groups by a small factor model, run separately per sex.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from mortdist.ets import fit_ets, forecast_ets
from mortdist.fpca import (
    ComponentSelection,
    FpcaModel,
    SelectionPolicy,
    fit_fpca,
    forecast_components,
)
from mortdist.panel import PanelDataError
from mortdist.transform import density_from_logit

MODEL_KINDS = ("ufts", "mfts", "mlfts", "fanova", "hdfpca")

#: canonical ordering used wherever model ties must break deterministically
MODEL_ORDER = MODEL_KINDS


@dataclass(frozen=True)
class ModelSpec:
    """Which strategy to run and how to pick component counts.

    ``p0`` (scores retained per group) and ``r`` (factors per score
    index) only apply to ``hdfpca``.
    """

    kind: str
    selection: SelectionPolicy = field(default_factory=SelectionPolicy)
    p0: int = 6
    r: int = 2

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.p0 < 1 or self.r < 1:
            raise ValueError("p0 and r must be at least 1")


class EtsScoreForecaster:
    """Callable score forecaster that records the families it selects."""

    def __init__(self) -> None:
        self.families: list[str] = []

    def __call__(self, series: np.ndarray, horizon: int) -> np.ndarray:
        fit = fit_ets(series)
        self.families.append(fit.family)
        return forecast_ets(fit, horizon)


def _values(series) -> np.ndarray:
    """Accept either a raw matrix or an object carrying one in .values."""
    if hasattr(series, "values") and not isinstance(series, np.ndarray):
        series = series.values
    out = np.asarray(series, dtype=float)
    if out.ndim != 2:
        raise ValueError("expected a years-by-ages matrix")
    return out


@dataclass(eq=False)
class LogitForecast:
    """Point forecasts on the logit scale plus fit metadata."""

    values: np.ndarray
    info: dict


def fit_forecast_ufts(
    series,
    spec: ModelSpec,
    horizon: int,
    score_forecaster: Callable | None = None,
) -> LogitForecast:
    """Univariate route: decompose one series and extrapolate its scores."""
    x = _values(series)
    forecaster = score_forecaster or EtsScoreForecaster()
    model = fit_fpca(x)
    selection = spec.selection.select(model.eigenvalues, model.n_obs)
    values = forecast_components(model, selection, horizon, forecaster)
    info = {"k": selection.k, "selection": selection}
    if isinstance(forecaster, EtsScoreForecaster):
        info["ets_families"] = list(forecaster.families)
    return LogitForecast(values=values, info=info)


# ---------------------------------------------------------------------------
# multivariate (stacked sexes)


@dataclass(eq=False)
class MftsModel:
    """Joint decomposition of the two per-sex-centered series of a group.

    The sexes are stacked along the age axis, so eigenfunctions have
    length 2(A-1) and unstack into per-sex blocks.  One component count
    is shared by both sexes.
    """

    means: dict[str, np.ndarray]
    joint: FpcaModel
    selection: ComponentSelection
    n_ages: int
    sexes: tuple[str, str] = ("F", "M")

    def unstack(self, stacked: np.ndarray) -> dict[str, np.ndarray]:
        m = self.n_ages
        return {self.sexes[0]: stacked[..., :m], self.sexes[1]: stacked[..., m:]}

    def forecast(
        self, horizon: int, score_forecaster: Callable | None = None
    ) -> dict[str, np.ndarray]:
        forecaster = score_forecaster or EtsScoreForecaster()
        stacked = forecast_components(self.joint, self.selection, horizon, forecaster)
        parts = self.unstack(stacked)
        out = {s: parts[s] + self.means[s] for s in self.sexes}
        if isinstance(forecaster, EtsScoreForecaster):
            self.ets_families = list(forecaster.families)
        return out


def fit_mfts(female, male, spec: ModelSpec) -> MftsModel:
    """Center each sex by its own mean curve and decompose the stack."""
    f = _values(female)
    m = _values(male)
    if f.shape != m.shape:
        raise ValueError("female and male series must share years and ages")
    mf = f.mean(axis=0)
    mm = m.mean(axis=0)
    stacked = np.hstack([f - mf, m - mm])
    joint = fit_fpca(stacked)
    selection = spec.selection.select(joint.eigenvalues, joint.n_obs)
    return MftsModel(
        means={"F": mf, "M": mm},
        joint=joint,
        selection=selection,
        n_ages=f.shape[1],
    )


def fit_forecast_mfts(
    female, male, spec: ModelSpec, horizon: int, score_forecaster=None
) -> dict[str, LogitForecast]:
    model = fit_mfts(female, male, spec)
    forecaster = score_forecaster or EtsScoreForecaster()
    values = model.forecast(horizon, forecaster)
    info = {"k": model.selection.k, "selection": model.selection}
    if isinstance(forecaster, EtsScoreForecaster):
        info["ets_families"] = list(forecaster.families)
    return {s: LogitForecast(values=values[s], info=info) for s in ("F", "M")}


# ---------------------------------------------------------------------------
# multilevel (common + sex-specific components)


@dataclass(eq=False)
class MlftsModel:
    """Common/sex-specific split of a group's two series.

    The common series is the simple average of the two per-sex-centered
    series; what it leaves behind in each sex is decomposed separately.
    ``within_cluster_variability`` measures, per sex, the share of
    retained variance carried by the common component.
    """

    means: dict[str, np.ndarray]
    common: FpcaModel
    common_selection: ComponentSelection
    specific: dict[str, FpcaModel]
    specific_selection: dict[str, ComponentSelection]

    @property
    def within_cluster_variability(self) -> dict[str, float]:
        k = self.common_selection.k
        common_var = float(self.common.eigenvalues[:k].sum())
        out = {}
        for s, model in self.specific.items():
            l = self.specific_selection[s].k
            own = float(model.eigenvalues[:l].sum())
            denom = common_var + own
            out[s] = common_var / denom if denom > 0.0 else 1.0
        return out

    def forecast(
        self, horizon: int, score_forecaster: Callable | None = None
    ) -> dict[str, np.ndarray]:
        out = {}
        families: dict[str, list[str]] = {}
        common_forecaster = score_forecaster or EtsScoreForecaster()
        common_part = forecast_components(
            self.common, self.common_selection, horizon, common_forecaster
        )
        if isinstance(common_forecaster, EtsScoreForecaster):
            families["common"] = list(common_forecaster.families)
        for s, model in self.specific.items():
            forecaster = score_forecaster or EtsScoreForecaster()
            own = forecast_components(
                model, self.specific_selection[s], horizon, forecaster
            )
            out[s] = self.means[s] + common_part + own
            if isinstance(forecaster, EtsScoreForecaster):
                families[s] = list(forecaster.families)
        self.ets_families = families
        return out


def fit_mlfts(female, male, spec: ModelSpec) -> MlftsModel:
    """Fit the common-average decomposition plus per-sex remainders.

    The residual series of each sex is its centered series minus the
    common series itself, so two identical inputs leave an exactly zero
    remainder.
    """
    f = _values(female)
    m = _values(male)
    if f.shape != m.shape:
        raise ValueError("female and male series must share years and ages")
    means = {"F": f.mean(axis=0), "M": m.mean(axis=0)}
    centered = {"F": f - means["F"], "M": m - means["M"]}
    common_series = 0.5 * (centered["F"] + centered["M"])
    common = fit_fpca(common_series)
    common_selection = spec.selection.select(common.eigenvalues, common.n_obs)

    specific = {}
    specific_selection = {}
    for s in ("F", "M"):
        remainder = centered[s] - common_series
        model = fit_fpca(remainder)
        specific[s] = model
        specific_selection[s] = spec.selection.select(model.eigenvalues, model.n_obs)
    return MlftsModel(
        means=means,
        common=common,
        common_selection=common_selection,
        specific=specific,
        specific_selection=specific_selection,
    )


def fit_forecast_mlfts(
    female, male, spec: ModelSpec, horizon: int, score_forecaster=None
) -> dict[str, LogitForecast]:
    model = fit_mlfts(female, male, spec)
    values = model.forecast(horizon, score_forecaster)
    info = {
        "k": model.common_selection.k,
        "l": {s: model.specific_selection[s].k for s in ("F", "M")},
        "within_cluster_variability": model.within_cluster_variability,
    }
    if hasattr(model, "ets_families"):
        info["ets_families"] = model.ets_families
    return {s: LogitForecast(values=values[s], info=info) for s in ("F", "M")}


# ---------------------------------------------------------------------------
# two-way functional ANOVA


@dataclass(eq=False)
class FanovaDecomposition:
    """Grand mean, group (row) effects, sex (column) effects, remainder.

    Effects are plain averages of the panel deviations, so group
    effects sum to zero across groups and sex effects across sexes.
    """

    grand: np.ndarray
    row_effects: dict[str, np.ndarray]
    col_effects: dict[str, np.ndarray]
    residuals: dict[tuple[str, str], np.ndarray]

    def reconstruct(self, group: str, sex: str) -> np.ndarray:
        return (
            self.grand
            + self.row_effects[group]
            + self.col_effects[sex]
            + self.residuals[(group, sex)]
        )


def fit_fanova(
    data: Mapping[tuple[str, str], np.ndarray],
    groups: Sequence[str],
    sexes: Sequence[str] = ("F", "M"),
) -> FanovaDecomposition:
    """Average out the two-way panel structure.

    ``data`` maps every (group, sex) to a years-by-ages matrix of the
    same shape; missing cells are an error.
    """
    missing = [(g, s) for g in groups for s in sexes if (g, s) not in data]
    if missing:
        raise PanelDataError(f"panel is missing cells: {missing}")
    arrays = {key: _values(data[key]) for key in data if key[0] in set(groups)}
    shapes = {a.shape for a in arrays.values()}
    if len(shapes) != 1:
        raise ValueError("all panel cells must share the same shape")

    stacked = np.stack([arrays[(g, s)] for g in groups for s in sexes])
    grand = stacked.mean(axis=(0, 1))

    row_effects = {}
    for g in groups:
        rows = np.stack([arrays[(g, s)] for s in sexes])
        row_effects[g] = rows.mean(axis=(0, 1)) - grand
    col_effects = {}
    for s in sexes:
        cols = np.stack([arrays[(g, s)] for g in groups])
        col_effects[s] = cols.mean(axis=(0, 1)) - grand

    residuals = {
        (g, s): arrays[(g, s)] - grand - row_effects[g] - col_effects[s]
        for g in groups
        for s in sexes
    }
    return FanovaDecomposition(
        grand=grand,
        row_effects=row_effects,
        col_effects=col_effects,
        residuals=residuals,
    )


def fit_forecast_fanova(
    data: Mapping[tuple[str, str], np.ndarray],
    groups: Sequence[str],
    spec: ModelSpec,
    horizon: int,
    score_forecaster=None,
) -> dict[tuple[str, str], LogitForecast]:
    """Forecast effects as constants and the remainder per group.

    The remainder pair (both sexes of one group) is forecast with the
    stacked joint decomposition, then the fixed effects are added back.
    """
    decomp = fit_fanova(data, groups)
    out = {}
    for g in groups:
        pair = fit_forecast_mfts(
            decomp.residuals[(g, "F")],
            decomp.residuals[(g, "M")],
            spec,
            horizon,
            score_forecaster,
        )
        for s in ("F", "M"):
            values = (
                pair[s].values + decomp.grand + decomp.row_effects[g] + decomp.col_effects[s]
            )
            info = dict(pair[s].info)
            out[(g, s)] = LogitForecast(values=values, info=info)
    return out


# ---------------------------------------------------------------------------
# high-dimensional two-stage decomposition


@dataclass(eq=False)
class HdfpcaModel:
    """Per-group decompositions tied together by score-panel factors.

    Stage one decomposes each group's series, retaining ``p0`` score
    series.  Stage two, for each score index, collects the n-by-P panel
    of that score across groups and reduces it to ``r`` factors with
    orthonormal loadings.  Factor paths are what gets forecast.
    """

    groups: list[str]
    stage1: dict[str, FpcaModel]
    p0: int
    r: int
    loadings: list[np.ndarray]
    factors: list[np.ndarray]

    def score_forecasts(
        self, horizon: int, score_forecaster: Callable | None = None
    ) -> dict[str, np.ndarray]:
        """Forecast every retained score series via the factor paths."""
        forecaster = score_forecaster or EtsScoreForecaster()
        per_group = {g: np.zeros((horizon, self.p0)) for g in self.groups}
        for j in range(self.p0):
            lam = self.loadings[j]
            fac = self.factors[j]
            paths = np.column_stack(
                [
                    np.asarray(forecaster(fac[:, l], horizon), dtype=float)
                    for l in range(lam.shape[1])
                ]
            )
            panel_fc = paths @ lam.T  # horizon x P
            for p, g in enumerate(self.groups):
                per_group[g][:, j] = panel_fc[:, p]
        if isinstance(forecaster, EtsScoreForecaster):
            self.ets_families = list(forecaster.families)
        return per_group

    def forecast(
        self, horizon: int, score_forecaster: Callable | None = None
    ) -> dict[str, np.ndarray]:
        scores = self.score_forecasts(horizon, score_forecaster)
        out = {}
        for g in self.groups:
            model = self.stage1[g]
            k = min(self.p0, model.n_components)
            vals = np.tile(model.mean, (horizon, 1))
            if k:
                vals = vals + scores[g][:, :k] @ model.eigenfunctions[:k]
            out[g] = vals
        return out


def _fix_loading_signs(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    for col in v.T:
        total = col.sum()
        if total < 0.0:
            col *= -1.0
        elif total == 0.0:
            nz = np.flatnonzero(col)
            if nz.size and col[nz[0]] < 0.0:
                col *= -1.0
    return v


def fit_hdfpca(
    data: Mapping[str, np.ndarray],
    groups: Sequence[str],
    p0: int = 6,
    r: int = 2,
) -> HdfpcaModel:
    """Fit the two-stage decomposition across a dictionary of groups.

    ``r`` may not exceed the number of groups.  When it equals the
    number of groups the factor model retains the full score panel, so
    the loadings are fixed to the identity and factor forecasts
    coincide with direct per-series score forecasts.
    """
    groups = list(groups)
    P = len(groups)
    if P < 2:
        raise ValueError("need at least two groups")
    if r > P:
        raise ValueError(f"r={r} exceeds the {P} available groups")

    stage1 = {g: fit_fpca(_values(data[g])) for g in groups}
    avail = min(model.n_components for model in stage1.values())
    p0_eff = min(p0, avail)
    if p0_eff < p0:
        warnings.warn(
            f"retaining {p0_eff} scores per group; only {avail} components available",
            stacklevel=2,
        )

    loadings = []
    factors = []
    n = next(iter(stage1.values())).n_obs
    for j in range(p0_eff):
        panel = np.column_stack([stage1[g].scores[:, j] for g in groups])
        if r == P:
            lam = np.eye(P)
        else:
            cov = panel.T @ panel / (n - 1)
            w, v = np.linalg.eigh(cov)
            order = np.argsort(w)[::-1][:r]
            lam = _fix_loading_signs(v[:, order])
        loadings.append(lam)
        factors.append(panel @ lam)
    return HdfpcaModel(
        groups=groups,
        stage1=stage1,
        p0=p0_eff,
        r=r,
        loadings=loadings,
        factors=factors,
    )


def fit_forecast_hdfpca(
    data: Mapping[str, np.ndarray],
    groups: Sequence[str],
    spec: ModelSpec,
    horizon: int,
    score_forecaster=None,
) -> dict[str, LogitForecast]:
    model = fit_hdfpca(data, groups, p0=spec.p0, r=spec.r)
    values = model.forecast(horizon, score_forecaster)
    info = {"p0": model.p0, "r": model.r}
    if hasattr(model, "ets_families"):
        info["ets_families"] = model.ets_families
    return {g: LogitForecast(values=values[g], info=info) for g in groups}


# ---------------------------------------------------------------------------
# panel-level dispatch and inversion to the density scale


@dataclass(eq=False)
class DensityForecast:
    """Point forecasts on the death-count scale with provenance."""

    densities: np.ndarray
    model: str
    horizons: np.ndarray
    radix: float


def forecast_density(
    logit_values: np.ndarray, radix: float, model: str = ""
) -> DensityForecast:
    """Invert logit-scale forecasts into death-count curves.

    Rows whose implied CDF is non-monotone are repaired by sorting, so
    the output is always a valid density: nonnegative with rows summing
    to the radix.
    """
    values = np.atleast_2d(np.asarray(logit_values, dtype=float))
    dens = density_from_logit(values, radix)
    horizons = np.arange(1, dens.shape[0] + 1)
    return DensityForecast(densities=dens, model=model, horizons=horizons, radix=radix)


def fit_forecast_panel(
    data: Mapping[tuple[str, str], np.ndarray],
    groups: Sequence[str],
    spec: ModelSpec,
    horizon: int,
    score_forecaster=None,
) -> tuple[dict[tuple[str, str], np.ndarray], dict]:
    """Run one strategy over a whole logit panel.

    Returns per-(group, sex) logit forecasts plus an info dictionary
    keyed ``"group/sex"`` (or the strategy's natural unit) recording
    selected component counts and smoothing families.
    """
    groups = list(groups)
    out: dict[tuple[str, str], np.ndarray] = {}
    info: dict[str, dict] = {}

    if spec.kind == "ufts":
        for g in groups:
            for s in ("F", "M"):
                fc = fit_forecast_ufts(data[(g, s)], spec, horizon, score_forecaster)
                out[(g, s)] = fc.values
                info[f"{g}/{s}"] = _info_summary(fc.info)
    elif spec.kind == "mfts":
        for g in groups:
            pair = fit_forecast_mfts(
                data[(g, "F")], data[(g, "M")], spec, horizon, score_forecaster
            )
            for s in ("F", "M"):
                out[(g, s)] = pair[s].values
            info[g] = _info_summary(pair["F"].info)
    elif spec.kind == "mlfts":
        for g in groups:
            pair = fit_forecast_mlfts(
                data[(g, "F")], data[(g, "M")], spec, horizon, score_forecaster
            )
            for s in ("F", "M"):
                out[(g, s)] = pair[s].values
            info[g] = _info_summary(pair["F"].info)
    elif spec.kind == "fanova":
        fcs = fit_forecast_fanova(data, groups, spec, horizon, score_forecaster)
        for (g, s), fc in fcs.items():
            out[(g, s)] = fc.values
            info[g] = _info_summary(fc.info)
    else:  # hdfpca, run once per sex across all groups
        for s in ("F", "M"):
            fcs = fit_forecast_hdfpca(
                {g: data[(g, s)] for g in groups}, groups, spec, horizon, score_forecaster
            )
            for g in groups:
                out[(g, s)] = fcs[g].values
            info[s] = _info_summary(fcs[groups[0]].info)
    return out, info


def _info_summary(info: dict) -> dict:
    """JSON-safe subset of a fit info dictionary."""
    out = {}
    for key in ("k", "l", "p0", "r", "within_cluster_variability", "ets_families"):
        if key in info:
            out[key] = info[key]
    return out
