"""Expanding-window backtests, accuracy metrics, and diagnostics.

The backtest refits a strategy once per origin year and forecasts every
horizon from that single fit, producing a forecast triangle: with T
holdout years, horizon h collects T - h + 1 forecasts.  Point accuracy
is scored with the symmetric Kullback-Leibler divergence and the square
root of the (geometric-mean) Jensen-Shannon divergence, both computed
on probability-normalized densities with a small floor before logs.
Interval accuracy uses empirical coverage, its deviation from nominal,
and the standard interval score; interval metrics stop one target year
short of the point metrics, mirroring their printed definitions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from mortdist.intervals import (
    ResidualBank,
    build_interval,
    calibrate_conformal,
    calibrate_sd,
    collect_residuals,
)
from mortdist.models import (
    MODEL_ORDER,
    ModelSpec,
    fit_forecast_fanova,
    fit_forecast_hdfpca,
    fit_forecast_mfts,
    fit_forecast_mlfts,
    fit_forecast_ufts,
)
from mortdist.panel import DeathDensityPanel
from mortdist.transform import density_from_logit, series_to_logit

#: probabilities are floored here before any logarithm
DENSITY_FLOOR = 1.0e-12


# ---------------------------------------------------------------------------
# divergence metrics


def _probabilities(rows: np.ndarray, floor: float = DENSITY_FLOOR) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    p = rows / rows.sum(axis=-1, keepdims=True)
    return np.maximum(p, floor)


def kld_sym(actuals, forecasts, floor: float = DENSITY_FLOOR) -> float:
    """Symmetric Kullback-Leibler divergence, averaged per pair and age.

    Densities are normalized to probabilities and floored at ``floor``
    before logs.  The result is the total of the two directed
    divergences divided by (number of pairs) x (number of ages).
    """
    p = _probabilities(actuals, floor)
    q = _probabilities(forecasts, floor)
    if p.shape != q.shape:
        raise ValueError("actuals and forecasts must align")
    lp = np.log(p)
    lq = np.log(q)
    terms = p * (lp - lq) + q * (lq - lp)
    return float(terms.mean())


def jsd_root(actuals, forecasts, floor: float = DENSITY_FLOOR) -> float:
    """Square root of the Jensen-Shannon divergence with a geometric mean.

    The reference density is the pointwise geometric mean of the two
    probability rows; each directed divergence toward it gets weight
    one half, the total is averaged per pair and age like
    :func:`kld_sym`, and the square root of that average is returned.
    """
    p = _probabilities(actuals, floor)
    q = _probabilities(forecasts, floor)
    if p.shape != q.shape:
        raise ValueError("actuals and forecasts must align")
    delta = np.sqrt(p * q)
    ld = np.log(delta)
    terms = 0.5 * p * (np.log(p) - ld) + 0.5 * q * (np.log(q) - ld)
    return float(np.sqrt(terms.mean()))


# ---------------------------------------------------------------------------
# interval metrics


def ecp_cpd(actuals, lowers, uppers, alpha: float) -> tuple[float, float]:
    """Empirical coverage and its absolute deviation from nominal.

    Coverage counts cells with ``lower <= actual <= upper`` over all
    (pair, age) cells.  The deviation is ``|noncoverage - alpha|``
    where noncoverage is one minus coverage.
    """
    a = np.atleast_2d(np.asarray(actuals, dtype=float))
    lo = np.atleast_2d(np.asarray(lowers, dtype=float))
    up = np.atleast_2d(np.asarray(uppers, dtype=float))
    if not (a.shape == lo.shape == up.shape):
        raise ValueError("actuals and bounds must align")
    covered = (a >= lo) & (a <= up)
    ecp = float(covered.mean())
    cpd = abs((1.0 - ecp) - alpha)
    return ecp, cpd


def interval_score(actuals, lowers, uppers, alpha: float) -> float:
    """Mean interval score: width plus ``2/alpha`` times the overshoots."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    a = np.atleast_2d(np.asarray(actuals, dtype=float))
    lo = np.atleast_2d(np.asarray(lowers, dtype=float))
    up = np.atleast_2d(np.asarray(uppers, dtype=float))
    if not (a.shape == lo.shape == up.shape):
        raise ValueError("actuals and bounds must align")
    if np.any(up < lo):
        raise ValueError("upper bounds must not be below lower bounds")
    width = up - lo
    below = np.clip(lo - a, 0.0, None)
    above = np.clip(a - up, 0.0, None)
    scores = width + (2.0 / alpha) * (below + above)
    return float(scores.mean())


def best_method_counts(
    values: Mapping[str, Mapping[str, float]],
    order: Sequence[str] = MODEL_ORDER,
) -> dict[str, int]:
    """Count, per model, the groups where it attains the smallest value.

    ``values`` maps model name -> group -> metric value.  Every group
    contributes exactly one count; ties go to the model earliest in
    ``order``.  Models absent from ``values`` count zero.
    """
    models = [m for m in order if m in values]
    if not models:
        raise ValueError("no known models in the value table")
    groups = set()
    for m in models:
        groups.update(values[m])
    for m in models:
        if set(values[m]) != groups:
            raise ValueError(f"model {m!r} is missing groups")
    counts = {m: 0 for m in models}
    for g in sorted(groups):
        best = min(models, key=lambda m: (values[m][g], models.index(m)))
        counts[best] += 1
    return counts


# ---------------------------------------------------------------------------
# expanding-window backtest


@dataclass(frozen=True)
class BacktestPlan:
    """Expanding-window design.

    ``initial_train_end`` is the calendar year closing the first
    training window; origins run from there through ``final_year - 1``,
    each refit forecasting up to ``max_horizon`` years but never past
    ``final_year``.
    """

    initial_train_end: int
    final_year: int
    max_horizon: int

    def __post_init__(self) -> None:
        if self.final_year <= self.initial_train_end:
            raise ValueError("final year must come after the first training window")
        if self.max_horizon < 1:
            raise ValueError("max_horizon must be at least 1")

    @property
    def origins(self) -> list[int]:
        return list(range(self.initial_train_end, self.final_year))

    def horizon_at(self, origin: int) -> int:
        return min(self.max_horizon, self.final_year - origin)


@dataclass(eq=False)
class BacktestResult:
    """Forecast cubes per (group, sex) over an expanding-window plan.

    ``densities[(g, s)]`` has shape (n_origins, max_horizon, A); cells
    outside the triangle or belonging to failed fits hold NaN.
    """

    plan: BacktestPlan
    model: str
    origins: list[int]
    ages: np.ndarray
    densities: dict[tuple[str, str], np.ndarray]
    fit_info: dict[int, dict] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    def pairs(
        self, panel: DeathDensityPanel, group: str, sex: str, horizon: int
    ) -> tuple[np.ndarray, np.ndarray, list[int]]:
        """Aligned (actuals, forecasts, target years) at one horizon."""
        series = panel.get(group, sex)
        year_index = {int(y): i for i, y in enumerate(series.years)}
        cube = self.densities[(group, sex)]
        actuals, forecasts, targets = [], [], []
        for i, origin in enumerate(self.origins):
            target = origin + horizon
            if target > self.plan.final_year or horizon > self.plan.max_horizon:
                continue
            row = cube[i, horizon - 1]
            if np.any(np.isnan(row)):
                continue
            actuals.append(series.values[year_index[target]])
            forecasts.append(row)
            targets.append(target)
        if not actuals:
            return (
                np.empty((0, cube.shape[2])),
                np.empty((0, cube.shape[2])),
                [],
            )
        return np.asarray(actuals), np.asarray(forecasts), targets

    def counts_per_horizon(self, group: str, sex: str) -> np.ndarray:
        cube = self.densities[(group, sex)]
        return np.sum(~np.isnan(cube).any(axis=2), axis=0)


def _forecast_origin(
    logit_data: Mapping[tuple[str, str], np.ndarray],
    n_train: int,
    groups: Sequence[str],
    spec: ModelSpec,
    horizon: int,
    score_forecaster,
) -> tuple[dict[tuple[str, str], np.ndarray], dict, list[str]]:
    """Fit one origin; independent sub-fits fail independently."""
    sliced = {key: vals[:n_train] for key, vals in logit_data.items()}
    out: dict[tuple[str, str], np.ndarray] = {}
    info: dict[str, dict] = {}
    errors: list[str] = []

    def attempt(label, fn):
        try:
            fn()
        except Exception as exc:  # recorded, run continues
            errors.append(f"{label}: {exc}")

    if spec.kind == "ufts":
        for g in groups:
            for s in ("F", "M"):

                def one(g=g, s=s):
                    fc = fit_forecast_ufts(sliced[(g, s)], spec, horizon, score_forecaster)
                    out[(g, s)] = fc.values
                    info[f"{g}/{s}"] = _safe_info(fc.info)

                attempt(f"{g}/{s}", one)
    elif spec.kind in ("mfts", "mlfts"):
        fitter = fit_forecast_mfts if spec.kind == "mfts" else fit_forecast_mlfts
        for g in groups:

            def one(g=g):
                pair = fitter(sliced[(g, "F")], sliced[(g, "M")], spec, horizon, score_forecaster)
                for s in ("F", "M"):
                    out[(g, s)] = pair[s].values
                info[g] = _safe_info(pair["F"].info)

            attempt(g, one)
    elif spec.kind == "fanova":

        def whole():
            fcs = fit_forecast_fanova(sliced, groups, spec, horizon, score_forecaster)
            for (g, s), fc in fcs.items():
                out[(g, s)] = fc.values
                info[g] = _safe_info(fc.info)

        attempt("panel", whole)
    else:  # hdfpca
        for s in ("F", "M"):

            def one(s=s):
                fcs = fit_forecast_hdfpca(
                    {g: sliced[(g, s)] for g in groups}, groups, spec, horizon, score_forecaster
                )
                for g in groups:
                    out[(g, s)] = fcs[g].values
                info[s] = _safe_info(fcs[groups[0]].info)

            attempt(s, one)
    return out, info, errors


def _safe_info(info: dict) -> dict:
    out = {}
    for key in ("k", "l", "p0", "r", "within_cluster_variability", "ets_families"):
        if key in info:
            out[key] = info[key]
    return out


def run_expanding_window(
    panel: DeathDensityPanel,
    plan: BacktestPlan,
    spec: ModelSpec,
    score_forecaster: Callable | None = None,
    workers: int = 1,
) -> BacktestResult:
    """Refit once per origin year and forecast every reachable horizon.

    The logit transform is applied once to the full panel (it acts per
    row) and training windows are slices of it.  Failures of any
    sub-fit are recorded with their origin and unit and leave NaN cells
    behind; the run continues.
    """
    years = panel.years
    first, last = int(years[0]), int(years[-1])
    if plan.initial_train_end < first + 1 or plan.final_year > last:
        raise ValueError("plan years fall outside the panel")

    groups = panel.modeled_groups
    radix = panel.radix
    ages = panel.grid.ages
    logit_data = {
        (g, s): series_to_logit(panel.get(g, s)).values
        for g in groups
        for s in ("F", "M")
    }
    origins = plan.origins
    n_ages = ages.size
    cubes = {
        (g, s): np.full((len(origins), plan.max_horizon, n_ages), np.nan)
        for g in groups
        for s in ("F", "M")
    }
    year_pos = {int(y): i for i, y in enumerate(years)}

    def run_one(item):
        i, origin = item
        horizon = plan.horizon_at(origin)
        n_train = year_pos[origin] + 1
        out, info, errors = _forecast_origin(
            logit_data, n_train, groups, spec, horizon, score_forecaster
        )
        dens = {key: density_from_logit(vals, radix) for key, vals in out.items()}
        return i, origin, horizon, dens, info, errors

    items = list(enumerate(origins))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, items))
    else:
        results = [run_one(item) for item in items]

    fit_info: dict[int, dict] = {}
    failures: list[dict] = []
    for i, origin, horizon, dens, info, errors in results:
        for key, rows in dens.items():
            cubes[key][i, :horizon, :] = rows
        fit_info[origin] = info
        for msg in errors:
            failures.append({"origin": origin, "unit": msg.split(":", 1)[0], "error": msg})
    return BacktestResult(
        plan=plan,
        model=spec.kind,
        origins=origins,
        ages=ages,
        densities=cubes,
        fit_info=fit_info,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# residual banks and the full evaluation pipeline


def residual_banks(
    result: BacktestResult, panel: DeathDensityPanel
) -> dict[tuple[str, str], dict[int, ResidualBank]]:
    """Per (group, sex, horizon) banks of holdout residuals."""
    banks: dict[tuple[str, str], dict[int, ResidualBank]] = {}
    for key in result.densities:
        per_h = {}
        for h in range(1, result.plan.max_horizon + 1):
            actuals, forecasts, _ = result.pairs(panel, key[0], key[1], h)
            if actuals.shape[0] == 0:
                continue
            per_h[h] = collect_residuals(actuals, forecasts, h)
        banks[key] = per_h
    return banks


@dataclass(eq=False)
class EvaluationReport:
    """Everything the evaluation pipeline produces, ready to serialize."""

    point_metrics: pd.DataFrame
    interval_metrics: pd.DataFrame
    point_summaries: dict[str, pd.DataFrame]
    interval_summaries: dict[str, pd.DataFrame]
    heatmaps: dict[str, pd.DataFrame]
    fit_info: dict
    failures: list[dict]
    split: object


def evaluate_panel(
    panel: DeathDensityPanel,
    split,
    specs: Mapping[str, ModelSpec],
    alphas: Sequence[float] = (0.2, 0.05),
    interval_methods: Sequence[str] = ("sd", "conformal"),
    score_forecaster: Callable | None = None,
    workers: int = 1,
) -> EvaluationReport:
    """Backtest every strategy and assemble metric tables and heatmaps.

    Point forecasts are evaluated over the test years with origins
    expanding from the end of the validation segment.  Interval widths
    are calibrated per (group, sex, horizon) on validation residual
    banks and assessed on the test years, stopping one year short of
    the final one.
    """
    train_end = int(split.train_years[-1])
    val_end = int(split.validation_years[-1])
    final = int(split.test_years[-1])
    h_point = int(split.test_years.size)
    h_interval = int(split.validation_years.size) - 1
    if h_interval < 1:
        raise ValueError("validation segment is too short to calibrate intervals")

    test_plan = BacktestPlan(val_end, final, h_point)
    val_plan = BacktestPlan(train_end, val_end, h_interval)

    point_rows = []
    interval_rows = []
    fit_info: dict[str, dict] = {}
    failures: list[dict] = []
    groups = panel.modeled_groups

    for name, spec in specs.items():
        bt_test = run_expanding_window(panel, test_plan, spec, score_forecaster, workers)
        bt_val = run_expanding_window(panel, val_plan, spec, score_forecaster, workers)
        fit_info[name] = {
            "test": {str(k): v for k, v in bt_test.fit_info.items()},
            "validation": {str(k): v for k, v in bt_val.fit_info.items()},
        }
        for f in bt_test.failures + bt_val.failures:
            failures.append({"model": name, **f})
        banks = residual_banks(bt_val, panel)

        for g in groups:
            for s in ("F", "M"):
                for h in range(1, h_point + 1):
                    actuals, forecasts, targets = bt_test.pairs(panel, g, s, h)
                    if actuals.shape[0] == 0:
                        continue
                    point_rows.append(
                        {
                            "metric": "kld",
                            "model": name,
                            "group": g,
                            "sex": s,
                            "horizon": h,
                            "value": kld_sym(actuals, forecasts),
                        }
                    )
                    point_rows.append(
                        {
                            "metric": "jsd_root",
                            "model": name,
                            "group": g,
                            "sex": s,
                            "horizon": h,
                            "value": jsd_root(actuals, forecasts),
                        }
                    )
                for h in range(1, min(h_interval, h_point - 1) + 1):
                    bank = banks.get((g, s), {}).get(h)
                    if bank is None or bank.size < 2:
                        continue
                    actuals, forecasts, targets = bt_test.pairs(panel, g, s, h)
                    keep = [i for i, t in enumerate(targets) if t <= final - 1]
                    if not keep:
                        continue
                    actuals = actuals[keep]
                    forecasts = forecasts[keep]
                    for alpha in alphas:
                        for method in interval_methods:
                            cal = (
                                calibrate_sd(bank, alpha)
                                if method == "sd"
                                else calibrate_conformal(bank, alpha)
                            )
                            iv = build_interval(forecasts, cal)
                            ecp, cpd = ecp_cpd(actuals, iv.lower, iv.upper, alpha)
                            base = {
                                "model": name,
                                "group": g,
                                "sex": s,
                                "horizon": h,
                                "alpha": alpha,
                                "method": method,
                            }
                            interval_rows.append(
                                {**base, "metric": "ecp", "value": ecp}
                            )
                            interval_rows.append(
                                {**base, "metric": "noncoverage", "value": 1.0 - ecp}
                            )
                            interval_rows.append(
                                {**base, "metric": "cpd", "value": cpd}
                            )
                            interval_rows.append(
                                {
                                    **base,
                                    "metric": "interval_score",
                                    "value": interval_score(
                                        actuals, iv.lower, iv.upper, alpha
                                    ),
                                }
                            )

    point_metrics = pd.DataFrame(point_rows)
    interval_metrics = pd.DataFrame(interval_rows)

    point_summaries = {
        metric: _summary_table(point_metrics[point_metrics["metric"] == metric])
        for metric in ("kld", "jsd_root")
        if len(point_metrics)
    }
    interval_summaries = {}
    if len(interval_metrics):
        for metric in ("ecp", "noncoverage", "cpd", "interval_score"):
            for alpha in alphas:
                for method in interval_methods:
                    sub = interval_metrics[
                        (interval_metrics["metric"] == metric)
                        & (interval_metrics["alpha"] == alpha)
                        & (interval_metrics["method"] == method)
                    ]
                    if len(sub):
                        key = f"{metric}_a{int(round(100 * alpha)):02d}_{method}"
                        interval_summaries[key] = _summary_table(sub)

    heatmaps = {}
    if len(point_metrics):
        heatmaps.update(_heatmaps_from(point_metrics, "kld", specs))
    if len(interval_metrics):
        for metric in ("cpd", "interval_score"):
            for alpha in alphas:
                for method in interval_methods:
                    sub = interval_metrics[
                        (interval_metrics["alpha"] == alpha)
                        & (interval_metrics["method"] == method)
                    ]
                    if len(sub):
                        tag = f"a{int(round(100 * alpha)):02d}_{method}"
                        heatmaps.update(_heatmaps_from(sub, metric, specs, tag))

    return EvaluationReport(
        point_metrics=point_metrics,
        interval_metrics=interval_metrics,
        point_summaries=point_summaries,
        interval_summaries=interval_summaries,
        heatmaps=heatmaps,
        fit_info=fit_info,
        failures=failures,
        split=split,
    )


def _summary_table(sub: pd.DataFrame) -> pd.DataFrame:
    """Horizon-by-(sex, model) table averaged over groups, plus Mean/Median rows."""
    by_h = (
        sub.groupby(["horizon", "sex", "model"])["value"]
        .mean()
        .unstack(["sex", "model"])
        .sort_index(axis=1)
    )
    mean_row = by_h.mean(axis=0).to_frame("Mean").T
    median_row = by_h.median(axis=0).to_frame("Median").T
    out = pd.concat([by_h, mean_row, median_row])
    out.index.name = "horizon"
    return out


def _heatmaps_from(
    frame: pd.DataFrame, metric: str, specs: Mapping[str, ModelSpec], tag: str = ""
) -> dict[str, pd.DataFrame]:
    """Best-model counts per horizon, one table per sex."""
    order = [m for m in MODEL_ORDER if m in specs]
    sub = frame[frame["metric"] == metric]
    out = {}
    for s in sorted(sub["sex"].unique()):
        rows = []
        horizons = sorted(sub[sub["sex"] == s]["horizon"].unique())
        for h in horizons:
            cell = sub[(sub["sex"] == s) & (sub["horizon"] == h)]
            values = {
                m: dict(zip(cell[cell["model"] == m]["group"], cell[cell["model"] == m]["value"]))
                for m in order
            }
            values = {m: v for m, v in values.items() if v}
            if not values:
                continue
            counts = best_method_counts(values, order)
            rows.append({"horizon": h, **{m: counts.get(m, 0) for m in order}})
        if rows:
            name = f"{metric}_{tag}_{s}" if tag else f"{metric}_{s}"
            out[name] = pd.DataFrame(rows).set_index("horizon")
    return out


# ---------------------------------------------------------------------------
# descriptive diagnostics


def diagnostics_klmatrix(
    panel: DeathDensityPanel, floor: float = DENSITY_FLOOR
) -> dict[str, tuple[pd.DataFrame, pd.DataFrame]]:
    """Symmetric divergence of each group against the national series.

    For every sex, returns two matrices: per (group, year), the
    divergence of that year's density from the national one averaged
    over ages; and per (group, age), the pointwise divergence averaged
    over years.
    """
    if panel.national is None:
        raise ValueError("panel has no designated national group")
    out = {}
    groups = panel.modeled_groups
    years = panel.years
    ages = panel.grid.ages
    for s in panel.sexes:
        nat = _probabilities(panel.get(panel.national, s).values, floor)
        lnat = np.log(nat)
        by_year = np.empty((len(groups), years.size))
        by_age = np.empty((len(groups), ages.size))
        for i, g in enumerate(groups):
            p = _probabilities(panel.get(g, s).values, floor)
            lp = np.log(p)
            terms = p * (lp - lnat) + nat * (lnat - lp)
            by_year[i] = terms.mean(axis=1)
            by_age[i] = terms.mean(axis=0)
        out[s] = (
            pd.DataFrame(by_year, index=groups, columns=years),
            pd.DataFrame(by_age, index=groups, columns=ages),
        )
    return out


def _lagged_cov(x: np.ndarray, y: np.ndarray, lag: int) -> np.ndarray:
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    return xc[: n - lag].T @ yc[lag:] / n


def functional_ccf(x: np.ndarray, y: np.ndarray, max_lag: int) -> np.ndarray:
    """Cross-correlation of two curve series for lags 0..max_lag.

    The statistic at lag h is the Frobenius norm of the lag-h
    cross-covariance surface divided by the geometric mean of the two
    lag-0 variance traces; sums over the grid stand in for integrals.
    Applied to a series against itself it reduces to the
    autocorrelation, and at lag 0 equals it exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("series must share shape")
    n = x.shape[0]
    if max_lag < 0 or max_lag >= n:
        raise ValueError("max_lag must be in [0, n)")
    tx = float(np.trace(_lagged_cov(x, x, 0)))
    ty = float(np.trace(_lagged_cov(y, y, 0)))
    if tx <= 0.0 or ty <= 0.0:
        raise ValueError("zero-variance series have no correlation structure")
    denom = np.sqrt(tx) * np.sqrt(ty)
    rho = np.empty(max_lag + 1)
    for h in range(max_lag + 1):
        rho[h] = np.linalg.norm(_lagged_cov(x, y, h)) / denom
    return rho


def functional_acf(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Autocorrelation of a curve series for lags 0..max_lag."""
    return functional_ccf(x, x, max_lag)


# ---------------------------------------------------------------------------
# production forecasts (full-sample fits)


def production_forecasts(
    panel: DeathDensityPanel,
    spec: ModelSpec,
    horizon: int,
    score_forecaster: Callable | None = None,
) -> tuple[dict[tuple[str, str], np.ndarray], dict]:
    """Fit on all years and forecast the next ``horizon`` years."""
    groups = panel.modeled_groups
    logit_data = {
        (g, s): series_to_logit(panel.get(g, s)).values
        for g in groups
        for s in ("F", "M")
    }
    out, info, errors = _forecast_origin(
        logit_data, panel.years.size, groups, spec, horizon, score_forecaster
    )
    if errors:
        raise RuntimeError("; ".join(errors))
    radix = panel.radix
    return {key: density_from_logit(vals, radix) for key, vals in out.items()}, info


def production_intervals(
    panel: DeathDensityPanel,
    spec: ModelSpec,
    horizon: int,
    alphas: Sequence[float],
    methods: Sequence[str] = ("sd", "conformal"),
    calibration_window: int | None = None,
    score_forecaster: Callable | None = None,
    workers: int = 1,
) -> dict:
    """Forecast intervals for future years.

    Residual banks come from an expanding window over the last
    ``calibration_window`` years (a third of the sample by default);
    the point forecast comes from the full sample.  Horizons are capped
    at ``calibration_window - 1`` so every bank has at least two rows.
    """
    years = panel.years
    n = years.size
    w = calibration_window or max(n // 3, 3)
    if w < 3 or w >= n:
        raise ValueError("calibration window must be in [3, n_years)")
    cal_plan = BacktestPlan(int(years[n - w - 1]), int(years[-1]), min(horizon, w - 1))
    bt = run_expanding_window(panel, cal_plan, spec, score_forecaster, workers)
    banks = residual_banks(bt, panel)
    points, info = production_forecasts(panel, spec, horizon, score_forecaster)

    out = {}
    h_max = min(horizon, w - 1)
    for key, point in points.items():
        per_method: dict[tuple[str, float], dict] = {}
        for method in methods:
            for alpha in alphas:
                lowers, uppers, hs = [], [], []
                for h in range(1, h_max + 1):
                    bank = banks.get(key, {}).get(h)
                    if bank is None or bank.size < 2:
                        continue
                    cal = (
                        calibrate_sd(bank, alpha)
                        if method == "sd"
                        else calibrate_conformal(bank, alpha)
                    )
                    iv = build_interval(point[h - 1], cal)
                    lowers.append(iv.lower)
                    uppers.append(iv.upper)
                    hs.append(h)
                per_method[(method, alpha)] = {
                    "horizons": hs,
                    "lower": np.asarray(lowers),
                    "upper": np.asarray(uppers),
                }
        out[key] = per_method
    return {"intervals": out, "points": points, "info": info}
