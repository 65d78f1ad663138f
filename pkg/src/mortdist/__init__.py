"""Forecasting panels of age-at-death distributions.

The package ingests life-table death counts on a single-year age grid,
moves them to an unconstrained logit-of-CDF representation, forecasts
that representation with functional principal components and exponential
smoothing, and returns point and interval forecasts on the death-count
scale together with backtest metrics.
"""

from mortdist.panel import (
    AgeGrid,
    DeathDensityPanel,
    DeathDensitySeries,
    PanelDataError,
    SampleSplit,
    load_panel,
    load_panel_dir,
    normalize_to_probability,
    save_panel,
    split_years,
)
from mortdist.transform import (
    CdfSeries,
    LogitCdfSeries,
    cdf_from_probabilities,
    density_from_logit,
    from_logit,
    logit_from_cdf,
    series_to_logit,
    to_cdf,
    to_logit,
)
from mortdist.fpca import (
    ComponentSelection,
    FpcaModel,
    SelectionPolicy,
    fit_fpca,
    forecast_components,
    select_k_evr,
    select_k_fixed,
)
from mortdist.ets import EtsFit, fit_ets, forecast_ets
from mortdist.models import (
    DensityForecast,
    FanovaDecomposition,
    HdfpcaModel,
    LogitForecast,
    MftsModel,
    MlftsModel,
    ModelSpec,
    fit_fanova,
    fit_forecast_panel,
    fit_forecast_ufts,
    fit_hdfpca,
    fit_mfts,
    fit_mlfts,
    forecast_density,
)
from mortdist.intervals import (
    ConformalCalibration,
    IntervalForecast,
    ResidualBank,
    SdCalibration,
    build_interval,
    calibrate_conformal,
    calibrate_sd,
    collect_residuals,
)
from mortdist.evaluation import (
    BacktestPlan,
    BacktestResult,
    EvaluationReport,
    best_method_counts,
    diagnostics_klmatrix,
    ecp_cpd,
    evaluate_panel,
    functional_acf,
    functional_ccf,
    interval_score,
    jsd_root,
    kld_sym,
    production_forecasts,
    production_intervals,
    residual_banks,
    run_expanding_window,
)

__version__ = "0.1.0"

__all__ = [
    "AgeGrid",
    "BacktestPlan",
    "BacktestResult",
    "CdfSeries",
    "ComponentSelection",
    "ConformalCalibration",
    "DeathDensityPanel",
    "DeathDensitySeries",
    "DensityForecast",
    "EtsFit",
    "EvaluationReport",
    "FanovaDecomposition",
    "FpcaModel",
    "HdfpcaModel",
    "IntervalForecast",
    "LogitCdfSeries",
    "LogitForecast",
    "MftsModel",
    "MlftsModel",
    "ModelSpec",
    "PanelDataError",
    "ResidualBank",
    "SampleSplit",
    "SdCalibration",
    "SelectionPolicy",
    "best_method_counts",
    "build_interval",
    "calibrate_conformal",
    "calibrate_sd",
    "cdf_from_probabilities",
    "collect_residuals",
    "density_from_logit",
    "diagnostics_klmatrix",
    "ecp_cpd",
    "evaluate_panel",
    "fit_ets",
    "fit_fanova",
    "fit_forecast_panel",
    "fit_forecast_ufts",
    "fit_fpca",
    "fit_hdfpca",
    "fit_mfts",
    "fit_mlfts",
    "forecast_components",
    "forecast_density",
    "forecast_ets",
    "from_logit",
    "functional_acf",
    "functional_ccf",
    "interval_score",
    "jsd_root",
    "kld_sym",
    "load_panel",
    "load_panel_dir",
    "logit_from_cdf",
    "normalize_to_probability",
    "production_forecasts",
    "production_intervals",
    "residual_banks",
    "run_expanding_window",
    "save_panel",
    "select_k_evr",
    "select_k_fixed",
    "series_to_logit",
    "split_years",
    "to_cdf",
    "to_logit",
]
