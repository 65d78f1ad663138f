"""Command-line entry points.

One declarative YAML config names the data file, column schema, split
fractions, model list, component policy, horizons, alphas, and output
directory; flags override individual values.  Subcommands expose each
pipeline stage (``transform``, ``fpca``, ``forecast``, ``interval``,
``evaluate``) and ``run`` executes everything into a directory with a
manifest recording every pinned numerical decision.  All outputs are
deterministic: the same config and data produce byte-identical files
regardless of worker count.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import shutil
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from mortdist import ets as ets_mod
from mortdist import evaluation as eval_mod
from mortdist import fpca as fpca_mod
from mortdist import intervals as intervals_mod
from mortdist import panel as panel_mod
from mortdist import transform as transform_mod
from mortdist.fpca import SelectionPolicy, fit_fpca
from mortdist.models import MODEL_KINDS, MODEL_ORDER, ModelSpec
from mortdist.panel import load_panel, split_years
from mortdist.transform import series_to_logit

DEFAULT_CONFIG = {
    "data": {
        "path": None,
        "columns": {},
        "delimiter": None,
        "radix": 1.0e5,
        "group_order": None,
        "national": None,
    },
    "split": [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    "models": list(MODEL_KINDS),
    "selection": {"method": "evr", "k": 6},
    "hdfpca": {"p0": 6, "r": 2},
    "alphas": [0.2, 0.05],
    "interval_methods": ["sd", "conformal"],
    "horizon": 10,
    "calibration_window": None,
    "max_lag": 5,
    "output": "mortdist_out",
    "workers": 1,
}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None) -> dict:
    # deep copy: override handling writes into nested sections
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ValueError("config file must hold a mapping")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    return cfg


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "data", None):
        cfg["data"]["path"] = args.data
    if getattr(args, "output", None):
        cfg["output"] = args.output
    if getattr(args, "models", None):
        cfg["models"] = args.models
    if getattr(args, "model", None):
        cfg["models"] = [args.model]
    if getattr(args, "k", None) is not None:
        cfg["selection"] = {"method": "fixed", "k": args.k}
    if getattr(args, "selection", None):
        cfg["selection"]["method"] = args.selection
    if getattr(args, "horizon", None) is not None:
        cfg["horizon"] = args.horizon
    if getattr(args, "alpha", None):
        cfg["alphas"] = args.alpha
    if getattr(args, "method", None):
        cfg["interval_methods"] = [args.method]
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    env_workers = os.environ.get("MORTDIST_WORKERS")
    if env_workers:
        cfg["workers"] = int(env_workers)
    return cfg


def _panel_from_cfg(cfg: dict):
    data = cfg["data"]
    if not data.get("path"):
        raise ValueError("no data path configured; pass --data or set data.path")
    return load_panel(
        data["path"],
        schema=data.get("columns") or None,
        delimiter=data.get("delimiter"),
        radix=float(data.get("radix", 1.0e5)),
        group_order=data.get("group_order"),
        national=data.get("national"),
    )


def _specs_from_cfg(cfg: dict) -> dict[str, ModelSpec]:
    policy = SelectionPolicy(
        method=cfg["selection"]["method"], k=int(cfg["selection"]["k"])
    )
    hd = cfg["hdfpca"]
    specs = {}
    for name in cfg["models"]:
        if name not in MODEL_KINDS:
            raise ValueError(f"unknown model {name!r}")
        specs[name] = ModelSpec(
            kind=name, selection=policy, p0=int(hd["p0"]), r=int(hd["r"])
        )
    return specs


# ---------------------------------------------------------------------------
# deterministic writers


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_frame(path: Path, frame: pd.DataFrame, index: bool = True) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, float_format="%.12g", index=index)


def _long_forecast_frame(panel, forecasts: dict) -> pd.DataFrame:
    rows = []
    last = int(panel.years[-1])
    ages = panel.grid.ages
    for (g, s), dens in sorted(forecasts.items()):
        for i, row in enumerate(dens):
            year = last + i + 1
            for age, val in zip(ages, row):
                rows.append(
                    {"group": g, "sex": s, "year": year, "age": int(age), "deaths": val}
                )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# manifest


def _design_decisions(cfg: dict) -> dict:
    return {
        "age_weighting": "unit_sums",
        "backtest_refit": "once_per_origin",
        "calibration_scope": "per_group_sex_horizon",
        "cdf_last_entry": "pinned_to_one",
        "clip_epsilon": transform_mod.CLIP_EPSILON,
        "correlation_cov_divisor": "n",
        "correlation_norm": "frobenius",
        "covariance_divisor": "n_minus_1",
        "cpd_definition": "abs_noncoverage_minus_alpha",
        "density_floor": eval_mod.DENSITY_FLOOR,
        "eigen_sign": "nonnegative_sum_first_nonzero_positive",
        "eigenvalue_rel_floor": fpca_mod.EIGENVALUE_REL_FLOOR,
        "ets_aicc_param_counts": {"AAN": 5, "AAdN": 6, "ANN": 3},
        "ets_alpha_box": [1.0e-4, 1.0 - 1.0e-4],
        "ets_beta_box": "(0, alpha)",
        "ets_fallback": "ANN_alpha_0.5_below_4_obs",
        "ets_families": list(ets_mod.FAMILIES),
        "ets_optimizer": {
            "fatol": 1.0e-8,
            "method": "nelder-mead",
            "restart_seed": ets_mod._RESTART_SEED,
            "restarts": ets_mod._N_RESTARTS,
            "xatol": 1.0e-6,
        },
        "ets_phi_box": list(ets_mod.PHI_BOUNDS),
        "evr_kmax_mean": "all_computed_eigenvalues",
        "fanova_residual_model": "mfts_per_group",
        "fpca_method": "svd_of_centered_matrix",
        "gamma_estimator": "population_sd",
        "group_order": "config" if cfg["data"].get("group_order") else "input",
        "hdfpca_full_rank_loadings": "identity",
        "hdfpca_p0": int(cfg["hdfpca"]["p0"]),
        "hdfpca_per_sex": True,
        "hdfpca_r": int(cfg["hdfpca"]["r"]),
        "interval_lower_clamp": 0.0,
        "interval_max_horizon": "validation_length_minus_1",
        "interval_symmetric": True,
        "interval_target_years": "through_penultimate_test_year",
        "mfts_centering": "per_sex",
        "mfts_selection": "single_joint_k",
        "mlfts_common_series": "average_of_per_sex_centered",
        "model_tie_break": list(MODEL_ORDER),
        "monotone_repair": "row_sort",
        "national_excluded_from_models": True,
        "noncoverage_also_emitted": True,
        "point_max_horizon": "test_length",
        "quantile_method": "linear_type7",
        "rescale_warn_rtol": panel_mod.RESCALE_WARN_RTOL,
        "row_sum_rtol": panel_mod.ROW_SUM_RTOL,
        "selection": {
            "k": int(cfg["selection"]["k"]),
            "method": cfg["selection"]["method"],
        },
        "transform_scope": "per_row",
        "xi_grid": {"start": 0.0, "step": 0.01, "stop": 5.0},
        "xi_tie_break": "smallest",
        "zero_cells": "preserved",
    }


def _manifest(cfg: dict, panel, extra: dict) -> dict:
    data_path = Path(cfg["data"]["path"])
    digest = hashlib.sha256(data_path.read_bytes()).hexdigest()
    cfg_echo = {
        k: v for k, v in cfg.items() if k not in ("output", "workers")
    }
    cfg_echo["data"] = {k: v for k, v in cfg["data"].items() if k != "path"}
    cfg_echo["data"]["file"] = data_path.name
    return {
        "config": cfg_echo,
        "data_sha256": digest,
        "decisions": _design_decisions(cfg),
        "deterministic": True,
        "panel": {
            "ages": [int(panel.grid.ages[0]), int(panel.grid.ages[-1])],
            "groups": panel.groups,
            "national": panel.national,
            "radix": panel.radix,
            "sexes": panel.sexes,
            "years": [int(panel.years[0]), int(panel.years[-1])],
        },
        **extra,
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_transform(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    panel = _panel_from_cfg(cfg)
    out = Path(cfg["output"]) / "transformed"
    for g in panel.groups:
        for s in panel.sexes:
            logit = series_to_logit(panel.get(g, s))
            frame = pd.DataFrame(
                logit.values, index=logit.years, columns=logit.grid.ages
            )
            frame.index.name = "year"
            _write_frame(out / f"{g}_{s}.csv", frame)
    print(f"wrote logit transforms for {len(panel.groups)} groups to {out}")
    return 0


def cmd_fpca(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    panel = _panel_from_cfg(cfg)
    group = args.group or panel.groups[0]
    sex = args.sex
    logit = series_to_logit(panel.get(group, sex))
    model = fit_fpca(logit.values)
    policy = SelectionPolicy(
        method=cfg["selection"]["method"], k=int(cfg["selection"]["k"])
    )
    selection = policy.select(model.eigenvalues, model.n_obs)
    out = Path(cfg["output"]) / "fpca"
    scores = pd.DataFrame(
        model.scores,
        index=logit.years,
        columns=[f"score_{j + 1}" for j in range(model.n_components)],
    )
    scores.index.name = "year"
    _write_frame(out / f"scores_{group}_{sex}.csv", scores)
    _write_json(
        out / f"summary_{group}_{sex}.json",
        {
            "eigenvalues": model.eigenvalues.tolist(),
            "explained_variance_ratio": model.explained_variance_ratio.tolist(),
            "group": group,
            "k": selection.k,
            "k_max": selection.k_max,
            "eta": selection.eta,
            "method": selection.method,
            "n_components": model.n_components,
            "sex": sex,
        },
    )
    print(
        f"{group}/{sex}: {model.n_components} components, selected k={selection.k} "
        f"({selection.method})"
    )
    return 0


def cmd_forecast(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    panel = _panel_from_cfg(cfg)
    specs = _specs_from_cfg(cfg)
    out = Path(cfg["output"]) / "forecasts"
    horizon = int(cfg["horizon"])
    meta = {}
    for name, spec in specs.items():
        forecasts, info = eval_mod.production_forecasts(panel, spec, horizon)
        _write_frame(out / f"{name}.csv", _long_forecast_frame(panel, forecasts), index=False)
        meta[name] = info
    _write_json(out / "forecast_info.json", meta)
    print(f"wrote {horizon}-step forecasts for {sorted(specs)} to {out}")
    return 0


def cmd_interval(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    panel = _panel_from_cfg(cfg)
    specs = _specs_from_cfg(cfg)
    out = Path(cfg["output"]) / "intervals"
    horizon = int(cfg["horizon"])
    ages = panel.grid.ages
    last = int(panel.years[-1])
    meta = {}
    for name, spec in specs.items():
        bundle = eval_mod.production_intervals(
            panel,
            spec,
            horizon,
            alphas=[float(a) for a in cfg["alphas"]],
            methods=list(cfg["interval_methods"]),
            calibration_window=cfg.get("calibration_window"),
            workers=int(cfg["workers"]),
        )
        meta[name] = bundle["info"]
        for method in cfg["interval_methods"]:
            for alpha in cfg["alphas"]:
                rows = []
                for (g, s), per in sorted(bundle["intervals"].items()):
                    block = per[(method, float(alpha))]
                    for h, lo, up in zip(block["horizons"], block["lower"], block["upper"]):
                        for age, l, u in zip(ages, lo, up):
                            rows.append(
                                {
                                    "group": g,
                                    "sex": s,
                                    "year": last + h,
                                    "age": int(age),
                                    "lower": l,
                                    "upper": u,
                                }
                            )
                tag = f"a{int(round(100 * float(alpha))):02d}"
                _write_frame(
                    out / f"{name}_{method}_{tag}.csv", pd.DataFrame(rows), index=False
                )
    _write_json(out / "interval_info.json", meta)
    print(f"wrote intervals for {sorted(specs)} to {out}")
    return 0


def _evaluate(cfg: dict, panel, out: Path) -> dict:
    specs = _specs_from_cfg(cfg)
    split = split_years(panel, [float(x) for x in cfg["split"]])
    report = eval_mod.evaluate_panel(
        panel,
        split,
        specs,
        alphas=[float(a) for a in cfg["alphas"]],
        interval_methods=list(cfg["interval_methods"]),
        workers=int(cfg["workers"]),
    )
    metrics_dir = out / "metrics"
    _write_frame(metrics_dir / "point_metrics.csv", report.point_metrics, index=False)
    _write_frame(
        metrics_dir / "interval_metrics.csv", report.interval_metrics, index=False
    )
    for metric, table in sorted(report.point_summaries.items()):
        _write_frame(metrics_dir / f"summary_{metric}.csv", table)
    for key, table in sorted(report.interval_summaries.items()):
        _write_frame(metrics_dir / f"summary_{key}.csv", table)
    for name, table in sorted(report.heatmaps.items()):
        _write_frame(metrics_dir / f"heatmap_{name}.csv", table)

    diag_dir = out / "diagnostics"
    if panel.national is not None:
        matrices = eval_mod.diagnostics_klmatrix(panel)
        for s, (by_year, by_age) in sorted(matrices.items()):
            _write_frame(diag_dir / f"klmatrix_year_{s}.csv", by_year)
            _write_frame(diag_dir / f"klmatrix_age_{s}.csv", by_age)
        rows = []
        max_lag = min(int(cfg["max_lag"]), panel.years.size - 1)
        for g in panel.modeled_groups:
            for s in panel.sexes:
                vals = panel.get(g, s).values
                nat = panel.get(panel.national, s).values
                acf = eval_mod.functional_acf(vals, max_lag)
                ccf = eval_mod.functional_ccf(vals, nat, max_lag)
                for lag in range(max_lag + 1):
                    rows.append(
                        {
                            "group": g,
                            "sex": s,
                            "lag": lag,
                            "acf": acf[lag],
                            "ccf_national": ccf[lag],
                        }
                    )
        _write_frame(diag_dir / "correlation.csv", pd.DataFrame(rows), index=False)

    return {
        "split": {
            "test": [int(split.test_years[0]), int(split.test_years[-1])],
            "train": [int(split.train_years[0]), int(split.train_years[-1])],
            "validation": [
                int(split.validation_years[0]),
                int(split.validation_years[-1]),
            ],
        },
        "failures": report.failures,
        "fits": report.fit_info,
    }


def cmd_evaluate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    panel = _panel_from_cfg(cfg)
    out = Path(cfg["output"])
    extra = _evaluate(cfg, panel, out)
    _write_json(out / "manifest.json", _manifest(cfg, panel, extra))
    print(f"wrote evaluation metrics to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = Path(cfg["output"])
    if out.exists() and any(out.iterdir()):
        if not args.force:
            raise ValueError(f"output directory {out} is not empty (use --force)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        panel = _panel_from_cfg(cfg)
        specs = _specs_from_cfg(cfg)
        horizon = int(cfg["horizon"])

        fc_meta = {}
        for name, spec in specs.items():
            forecasts, info = eval_mod.production_forecasts(panel, spec, horizon)
            _write_frame(
                out / "forecasts" / f"{name}.csv",
                _long_forecast_frame(panel, forecasts),
                index=False,
            )
            fc_meta[name] = info

        iv_meta = {}
        ages = panel.grid.ages
        last = int(panel.years[-1])
        for name, spec in specs.items():
            bundle = eval_mod.production_intervals(
                panel,
                spec,
                horizon,
                alphas=[float(a) for a in cfg["alphas"]],
                methods=list(cfg["interval_methods"]),
                calibration_window=cfg.get("calibration_window"),
                workers=int(cfg["workers"]),
            )
            iv_meta[name] = bundle["info"]
            for method in cfg["interval_methods"]:
                for alpha in cfg["alphas"]:
                    rows = []
                    for (g, s), per in sorted(bundle["intervals"].items()):
                        block = per[(method, float(alpha))]
                        for h, lo, up in zip(
                            block["horizons"], block["lower"], block["upper"]
                        ):
                            for age, l, u in zip(ages, lo, up):
                                rows.append(
                                    {
                                        "group": g,
                                        "sex": s,
                                        "year": last + h,
                                        "age": int(age),
                                        "lower": l,
                                        "upper": u,
                                    }
                                )
                    tag = f"a{int(round(100 * float(alpha))):02d}"
                    _write_frame(
                        out / "intervals" / f"{name}_{method}_{tag}.csv",
                        pd.DataFrame(rows),
                        index=False,
                    )

        extra = _evaluate(cfg, panel, out)
        extra["production"] = {"forecast_info": fc_meta, "interval_info": iv_meta}
        _write_json(out / "manifest.json", _manifest(cfg, panel, extra))
    except Exception:
        shutil.rmtree(out, ignore_errors=True)
        raise
    print(f"run complete: {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mortdist",
        description="Forecast panels of age-at-death distributions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--data", help="override the data path")
        p.add_argument("--output", help="override the output directory")
        p.add_argument("--workers", type=int, help="worker threads")

    p = sub.add_parser("transform", help="dump logit-CDF transforms")
    common(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("fpca", help="dump eigenvalues, scores, and the selected k")
    common(p)
    p.add_argument("--group", help="group to decompose (default: first)")
    p.add_argument("--sex", default="F", choices=["F", "M"])
    p.add_argument("--k", type=int, help="fixed component count")
    p.add_argument("--selection", choices=["evr", "fixed"])
    p.set_defaults(func=cmd_fpca)

    p = sub.add_parser("forecast", help="full-sample point forecasts")
    common(p)
    p.add_argument("--model", choices=list(MODEL_KINDS))
    p.add_argument("--models", nargs="+", choices=list(MODEL_KINDS))
    p.add_argument("--k", type=int, help="fixed component count")
    p.add_argument("--selection", choices=["evr", "fixed"])
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("interval", help="full-sample interval forecasts")
    common(p)
    p.add_argument("--model", choices=list(MODEL_KINDS))
    p.add_argument("--method", choices=["sd", "conformal"])
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_interval)

    p = sub.add_parser("evaluate", help="expanding-window backtest metrics")
    common(p)
    p.add_argument("--models", nargs="+", choices=list(MODEL_KINDS))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="forecasts, intervals, metrics, diagnostics")
    common(p)
    p.add_argument("--models", nargs="+", choices=list(MODEL_KINDS))
    p.add_argument("--horizon", type=int)
    p.add_argument("--force", action="store_true", help="overwrite the output dir")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
