"""Backtesting, divergence metrics, summaries, and diagnostics.

Every aggregate metric is mirrored by an explicit double-loop oracle;
the expanding-window triangle is pinned against the arithmetic count.
"""

import math

import numpy as np
import pandas as pd
import pytest

from mortdist.evaluation import (
    BacktestPlan,
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
from mortdist.models import ModelSpec
from mortdist.panel import split_years
from tests.conftest import RADIX, build_panel, density_rows, last_value_forecaster


def kld_oracle(actuals, forecasts, floor=1e-12):
    p = np.atleast_2d(actuals) / np.atleast_2d(actuals).sum(axis=1, keepdims=True)
    q = np.atleast_2d(forecasts) / np.atleast_2d(forecasts).sum(axis=1, keepdims=True)
    p = np.maximum(p, floor)
    q = np.maximum(q, floor)
    total = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            total += p[i, j] * (math.log(p[i, j]) - math.log(q[i, j]))
            total += q[i, j] * (math.log(q[i, j]) - math.log(p[i, j]))
    return total / p.size


def jsd_oracle(actuals, forecasts, floor=1e-12):
    p = np.atleast_2d(actuals) / np.atleast_2d(actuals).sum(axis=1, keepdims=True)
    q = np.atleast_2d(forecasts) / np.atleast_2d(forecasts).sum(axis=1, keepdims=True)
    p = np.maximum(p, floor)
    q = np.maximum(q, floor)
    total = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            delta = math.sqrt(p[i, j] * q[i, j])
            total += 0.5 * p[i, j] * (math.log(p[i, j]) - math.log(delta))
            total += 0.5 * q[i, j] * (math.log(q[i, j]) - math.log(delta))
    return math.sqrt(total / p.size)


def score_oracle(actuals, lowers, uppers, alpha):
    a = np.atleast_2d(actuals)
    lo = np.atleast_2d(lowers)
    up = np.atleast_2d(uppers)
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s = up[i, j] - lo[i, j]
            if a[i, j] < lo[i, j]:
                s += (2.0 / alpha) * (lo[i, j] - a[i, j])
            if a[i, j] > up[i, j]:
                s += (2.0 / alpha) * (a[i, j] - up[i, j])
            total += s
    return total / a.size


class TestPointMetrics:
    def test_kld_matches_oracle(self, rng):
        for _ in range(25):
            a = density_rows(rng, 3, 6)
            f = density_rows(rng, 3, 6)
            assert kld_sym(a, f) == pytest.approx(kld_oracle(a, f), abs=1e-12)

    def test_kld_identity_is_exactly_zero(self, rng):
        d = density_rows(rng, 4, 5)
        assert kld_sym(d, d) == 0.0

    def test_kld_symmetry_exact(self, rng):
        a = density_rows(rng, 2, 7)
        f = density_rows(rng, 2, 7)
        assert kld_sym(a, f) == kld_sym(f, a)

    def test_jsd_matches_oracle(self, rng):
        for _ in range(25):
            a = density_rows(rng, 2, 8)
            f = density_rows(rng, 2, 8)
            assert jsd_root(a, f) == pytest.approx(jsd_oracle(a, f), abs=1e-12)

    def test_jsd_bounded_by_log2_root(self, rng):
        a = density_rows(rng, 3, 6)
        f = density_rows(rng, 3, 6)
        assert 0.0 <= jsd_root(a, f) <= math.sqrt(math.log(2.0))

    def test_zero_cells_hit_the_floor_not_infinity(self):
        a = np.array([[0.0, 0.5, 0.5]])
        f = np.array([[0.25, 0.5, 0.25]])
        assert np.isfinite(kld_sym(a, f))
        assert np.isfinite(jsd_root(a, f))

    def test_scale_invariance(self, rng):
        # metrics act on probability-normalized rows
        a = density_rows(rng, 3, 6)
        f = density_rows(rng, 3, 6)
        assert kld_sym(a, f) == pytest.approx(kld_sym(a / RADIX, f * 3.0), rel=1e-12)


class TestIntervalMetrics:
    def test_ecp_and_deviation_hand_example(self):
        actual = np.array([[0.5, 2.0]])
        lo = np.zeros((1, 2))
        up = np.ones((1, 2))
        ecp, cpd = ecp_cpd(actual, lo, up, alpha=0.2)
        assert ecp == pytest.approx(0.5)
        assert cpd == pytest.approx(abs(0.5 - 0.2))

    def test_interval_score_hand_values(self):
        lo = np.array([[1.0, 1.0, 1.0]])
        up = np.array([[3.0, 3.0, 3.0]])
        actual = np.array([[2.0, 0.0, 5.0]])
        # inside: 2; below by 1: 2 + 10; above by 2: 2 + 20
        assert interval_score(actual, lo, up, alpha=0.2) == pytest.approx((2 + 12 + 22) / 3)

    def test_interval_score_matches_oracle(self, rng):
        for _ in range(25):
            lo = rng.normal(0.0, 1.0, size=(3, 5))
            up = lo + rng.uniform(0.1, 2.0, size=(3, 5))
            actual = rng.normal(0.0, 2.0, size=(3, 5))
            alpha = float(rng.uniform(0.05, 0.5))
            got = interval_score(actual, lo, up, alpha)
            assert got == pytest.approx(score_oracle(actual, lo, up, alpha), abs=1e-12)

    def test_crossed_bounds_rejected(self):
        with pytest.raises(ValueError):
            interval_score(np.ones((1, 2)), np.ones((1, 2)), np.zeros((1, 2)), 0.2)

    def test_alpha_range_checked(self):
        bounds = np.zeros((1, 2)), np.ones((1, 2))
        with pytest.raises(ValueError):
            interval_score(np.ones((1, 2)), *bounds, 0.0)


class TestBestMethodCounts:
    def test_minimum_wins_each_group(self):
        values = {
            "ufts": {"g1": 0.3, "g2": 0.1},
            "mfts": {"g1": 0.2, "g2": 0.4},
        }
        assert best_method_counts(values) == {"ufts": 1, "mfts": 1}

    def test_tie_goes_to_earliest_in_order(self):
        values = {
            "mlfts": {"g1": 0.2},
            "mfts": {"g1": 0.2},
            "hdfpca": {"g1": 0.5},
        }
        counts = best_method_counts(values)
        assert counts == {"mfts": 1, "mlfts": 0, "hdfpca": 0}

    def test_matches_bruteforce(self, rng):
        order = ("ufts", "mfts", "mlfts", "fanova", "hdfpca")
        for _ in range(20):
            groups = [f"g{i}" for i in range(int(rng.integers(2, 8)))]
            values = {
                m: {g: float(rng.integers(0, 4)) for g in groups} for m in order
            }
            counts = best_method_counts(values)
            expected = {m: 0 for m in order}
            for g in groups:
                best = min(order, key=lambda m: (values[m][g], order.index(m)))
                expected[best] += 1
            assert counts == expected
            assert sum(counts.values()) == len(groups)


class TestBacktestPlan:
    def test_origins_and_horizon_caps(self):
        plan = BacktestPlan(2031, 2047, 16)
        assert plan.origins == list(range(2031, 2047))
        assert plan.horizon_at(2031) == 16
        assert plan.horizon_at(2046) == 1

    def test_triangle_counts(self, rng):
        panel = build_panel(rng, ["g"], n_years=12, n_ages=6)
        plan = BacktestPlan(int(panel.years[7]), int(panel.years[-1]), 4)
        result = run_expanding_window(
            panel, plan, ModelSpec(kind="ufts"), score_forecaster=last_value_forecaster
        )
        np.testing.assert_array_equal(result.counts_per_horizon("g", "F"), [4, 3, 2, 1])

    def test_pairs_align_actual_target_years(self, rng):
        panel = build_panel(rng, ["g"], n_years=10, n_ages=5)
        plan = BacktestPlan(int(panel.years[5]), int(panel.years[-1]), 3)
        result = run_expanding_window(
            panel, plan, ModelSpec(kind="ufts"), score_forecaster=last_value_forecaster
        )
        actuals, forecasts, targets = result.pairs(panel, "g", "F", 2)
        assert targets == [int(y) for y in panel.years[7:]]
        series = panel.get("g", "F")
        for a, t in zip(actuals, targets):
            np.testing.assert_allclose(a, series.values[list(panel.years).index(t)])

    def test_plan_validated_against_panel(self, rng):
        panel = build_panel(rng, ["g"], n_years=8)
        plan = BacktestPlan(1900, int(panel.years[-1]), 2)
        with pytest.raises(ValueError):
            run_expanding_window(panel, plan, ModelSpec(kind="ufts"))


class TestFailureHandling:
    def test_broken_forecaster_is_recorded_not_raised(self, rng):
        panel = build_panel(rng, ["g"], n_years=10, n_ages=5)
        calls = {"n": 0}

        def flaky(series, horizon):
            calls["n"] += 1
            if calls["n"] == 1:
                raise RuntimeError("synthetic breakage")
            return last_value_forecaster(series, horizon)

        plan = BacktestPlan(int(panel.years[6]), int(panel.years[-1]), 2)
        result = run_expanding_window(panel, plan, ModelSpec(kind="ufts"), score_forecaster=flaky)
        assert result.failures
        assert "synthetic breakage" in result.failures[0]["error"]
        cube = result.densities[("g", "F")]
        assert np.isnan(cube[0]).all()  # the failed origin stays blank
        assert not np.isnan(cube[1]).any()


class TestResidualBanks:
    def test_bank_sizes_follow_triangle(self, rng):
        panel = build_panel(rng, ["g"], n_years=12, n_ages=6)
        plan = BacktestPlan(int(panel.years[7]), int(panel.years[-1]), 4)
        result = run_expanding_window(
            panel, plan, ModelSpec(kind="ufts"), score_forecaster=last_value_forecaster
        )
        banks = residual_banks(result, panel)
        assert {h: b.size for h, b in banks[("g", "F")].items()} == {1: 4, 2: 3, 3: 2, 4: 1}

    def test_residuals_are_actual_minus_forecast(self, rng):
        panel = build_panel(rng, ["g"], n_years=10, n_ages=5)
        plan = BacktestPlan(int(panel.years[6]), int(panel.years[-1]), 2)
        result = run_expanding_window(
            panel, plan, ModelSpec(kind="ufts"), score_forecaster=last_value_forecaster
        )
        banks = residual_banks(result, panel)
        actuals, forecasts, _ = result.pairs(panel, "g", "M", 1)
        np.testing.assert_allclose(banks[("g", "M")][1].residuals, actuals - forecasts)


class TestEvaluatePanel:
    @pytest.fixture
    def report(self, rng):
        panel = build_panel(rng, ["a", "b", "nat"], n_years=12, n_ages=7, national="nat")
        split = split_years(panel, [1 / 3, 1 / 3, 1 / 3])
        specs = {"ufts": ModelSpec(kind="ufts"), "mfts": ModelSpec(kind="mfts")}
        return (
            panel,
            evaluate_panel(
                panel, split, specs, alphas=[0.2], score_forecaster=last_value_forecaster
            ),
        )

    def test_point_rows_cover_models_units_horizons(self, report):
        panel, rep = report
        pm = rep.point_metrics
        assert set(pm["model"]) == {"ufts", "mfts"}
        assert set(pm["group"]) == {"a", "b"}  # national stays out
        assert set(pm["horizon"]) == {1, 2, 3, 4}
        assert set(pm["metric"]) == {"kld", "jsd_root"}
        counts = pm.groupby(["metric", "model"]).size()
        assert (counts == 2 * 2 * 4).all()  # groups x sexes x horizons

    def test_interval_rows_stop_before_final_year(self, report):
        _, rep = report
        im = rep.interval_metrics
        # four test years: interval targets may not use the last one
        assert set(im["horizon"]) == {1, 2, 3}
        assert set(im["method"]) == {"sd", "conformal"}
        assert set(im["metric"]) == {"ecp", "noncoverage", "cpd", "interval_score"}

    def test_summary_tables_have_mean_and_median_rows(self, report):
        _, rep = report
        table = rep.point_summaries["kld"]
        assert list(table.index[-2:]) == ["Mean", "Median"]
        assert table.columns.names == ["sex", "model"]
        body = table.iloc[:-2]
        np.testing.assert_allclose(table.loc["Mean"], body.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(table.loc["Median"], body.median(axis=0), rtol=1e-12)

    def test_heatmap_counts_sum_to_group_count(self, report):
        panel, rep = report
        for name, table in rep.heatmaps.items():
            for _, row in table.iterrows():
                assert row.sum() == len(panel.modeled_groups)

    def test_summary_values_recompute_from_rows(self, report):
        _, rep = report
        pm = rep.point_metrics
        sub = pm[(pm["metric"] == "kld") & (pm["model"] == "ufts") & (pm["sex"] == "F") & (pm["horizon"] == 2)]
        expected = sub["value"].mean()
        assert rep.point_summaries["kld"].loc[2, ("F", "ufts")] == pytest.approx(expected)

    def test_too_short_validation_rejected(self, rng):
        panel = build_panel(rng, ["a", "b"], n_years=6)
        split = split_years(panel, [0.5, 0.17, 0.33])  # validation of 1 year
        with pytest.raises(ValueError):
            evaluate_panel(panel, split, {"ufts": ModelSpec(kind="ufts")})


class TestDiagnostics:
    def test_klmatrix_matches_direct_loops(self, rng):
        panel = build_panel(rng, ["a", "b", "nat"], n_years=8, n_ages=5, national="nat")
        mats = diagnostics_klmatrix(panel)
        for s in ("F", "M"):
            by_year, by_age = mats[s]
            assert list(by_year.index) == ["a", "b"]
            nat = panel.get("nat", s).values
            nat = np.maximum(nat / nat.sum(axis=1, keepdims=True), 1e-12)
            for g in ("a", "b"):
                p = panel.get(g, s).values
                p = np.maximum(p / p.sum(axis=1, keepdims=True), 1e-12)
                terms = p * (np.log(p) - np.log(nat)) + nat * (np.log(nat) - np.log(p))
                np.testing.assert_allclose(by_year.loc[g].values, terms.mean(axis=1), atol=1e-12)
                np.testing.assert_allclose(by_age.loc[g].values, terms.mean(axis=0), atol=1e-12)

    def test_klmatrix_requires_national(self, rng):
        panel = build_panel(rng, ["a", "b"])
        with pytest.raises(ValueError):
            diagnostics_klmatrix(panel)


class TestFunctionalCorrelation:
    def test_white_noise_correlations_are_small(self, rng):
        n = 400
        x = rng.normal(size=(n, 3))
        acf = functional_acf(x, max_lag=5)
        assert acf.shape == (6,)
        assert np.all(acf[1:] < 3.0 / math.sqrt(n) * 1.5)

    def test_persistent_factor_decays_slowly(self, rng):
        n = 300
        phi = 0.9
        scores = np.empty(n)
        scores[0] = rng.normal()
        for t in range(1, n):
            scores[t] = phi * scores[t - 1] + rng.normal(0.0, 0.3)
        x = np.outer(scores, np.array([1.0, 0.5, -0.25])) + rng.normal(0.0, 0.01, size=(n, 3))
        acf = functional_acf(x, max_lag=4)
        assert acf[1] > 0.6
        assert acf[1] > acf[2] > acf[3]

    def test_self_ccf_equals_acf(self, rng):
        x = rng.normal(size=(50, 4))
        np.testing.assert_array_equal(functional_acf(x, 6), functional_ccf(x, x, 6))

    def test_lag_bounds_checked(self, rng):
        x = rng.normal(size=(10, 3))
        with pytest.raises(ValueError):
            functional_ccf(x, x, max_lag=10)

    def test_degenerate_series_rejected(self):
        flat = np.ones((20, 3))
        with pytest.raises(ValueError):
            functional_acf(flat, 2)


class TestProduction:
    def test_forecasts_on_density_scale(self, rng):
        panel = build_panel(rng, ["a", "b"], n_years=10, n_ages=6)
        out, info = production_forecasts(
            panel, ModelSpec(kind="ufts"), horizon=3, score_forecaster=last_value_forecaster
        )
        assert set(out) == {(g, s) for g in ("a", "b") for s in ("F", "M")}
        for dens in out.values():
            assert dens.shape == (3, 6)
            assert np.all(dens >= 0.0)
            np.testing.assert_allclose(dens.sum(axis=1), RADIX, rtol=1e-9)
        assert info

    def test_intervals_bundle_structure(self, rng):
        panel = build_panel(rng, ["a", "b"], n_years=12, n_ages=6)
        bundle = production_intervals(
            panel,
            ModelSpec(kind="ufts"),
            horizon=3,
            alphas=[0.2],
            methods=["sd", "conformal"],
            score_forecaster=last_value_forecaster,
        )
        per = bundle["intervals"][("a", "F")]
        block = per[("sd", 0.2)]
        assert block["horizons"] == [1, 2, 3]
        assert np.all(block["lower"] >= 0.0)
        assert np.all(block["upper"] >= block["lower"])
        assert bundle["points"][("a", "F")].shape == (3, 6)

    def test_horizon_capped_by_calibration_window(self, rng):
        panel = build_panel(rng, ["a"], n_years=12, n_ages=5)
        bundle = production_intervals(
            panel,
            ModelSpec(kind="ufts"),
            horizon=10,
            alphas=[0.2],
            methods=["sd"],
            calibration_window=4,
            score_forecaster=last_value_forecaster,
        )
        block = bundle["intervals"][("a", "F")][("sd", 0.2)]
        assert block["horizons"] == [1, 2, 3]  # window of 4 supports 3 steps
