"""The five forecasting strategies on logit-scale panels."""

import numpy as np
import pytest

from mortdist.fpca import SelectionPolicy, fit_fpca
from mortdist.models import (
    MODEL_KINDS,
    EtsScoreForecaster,
    ModelSpec,
    fit_fanova,
    fit_forecast_fanova,
    fit_forecast_hdfpca,
    fit_forecast_mfts,
    fit_forecast_mlfts,
    fit_forecast_panel,
    fit_forecast_ufts,
    fit_hdfpca,
    fit_mlfts,
    forecast_density,
)
from mortdist.panel import PanelDataError
from tests.conftest import last_value_forecaster


def latent_series(rng, n=14, m=8, scale=0.5):
    """Smooth logit-scale matrix: mean curve plus two drifting factors."""
    mean = np.linspace(-3.0, 2.0, m)
    f1 = np.sin(np.linspace(0.0, np.pi, m))
    f2 = np.cos(np.linspace(0.0, np.pi, m))
    s1 = np.cumsum(rng.normal(0.1, 0.2, n)) * scale
    s2 = rng.normal(0.0, 0.1, n) * scale
    return mean + np.outer(s1, f1) + np.outer(s2, f2)


def panel_data(rng, groups, n=14, m=8):
    return {
        (g, s): latent_series(rng, n, m) for g in groups for s in ("F", "M")
    }


SPEC = ModelSpec(kind="ufts", selection=SelectionPolicy(), p0=3, r=2)


class TestUfts:
    def test_shape_and_info(self, rng):
        fc = fit_forecast_ufts(latent_series(rng), SPEC, horizon=4)
        assert fc.values.shape == (4, 8)
        assert fc.info["k"] >= 1
        assert len(fc.info["ets_families"]) == fc.info["k"]

    def test_matches_manual_component_path(self, rng):
        data = latent_series(rng)
        fc = fit_forecast_ufts(data, SPEC, 3, score_forecaster=last_value_forecaster)
        model = fit_fpca(data)
        sel = SPEC.selection.select(model.eigenvalues, model.n_obs)
        k = min(sel.k, model.n_components)
        manual = np.tile(model.mean, (3, 1))
        for j in range(k):
            manual += np.outer(
                np.repeat(model.scores[-1, j], 3), model.eigenfunctions[j]
            )
        np.testing.assert_allclose(fc.values, manual, atol=1e-10)


class TestMfts:
    def test_duplicated_sex_reduces_to_ufts(self, rng):
        for _ in range(3):
            data = latent_series(rng)
            solo = fit_forecast_ufts(data, SPEC, 5)
            pair = fit_forecast_mfts(data, data.copy(), SPEC, 5)
            np.testing.assert_allclose(pair["F"].values, solo.values, atol=1e-6)
            np.testing.assert_allclose(pair["M"].values, solo.values, atol=1e-6)

    def test_shared_component_count(self, rng):
        pair = fit_forecast_mfts(latent_series(rng), latent_series(rng), SPEC, 2)
        assert pair["F"].info["k"] == pair["M"].info["k"]

    def test_distinct_means_survive(self, rng):
        f = latent_series(rng)
        m = f + 1.5  # same dynamics, shifted level
        pair = fit_forecast_mfts(f, m, SPEC, 4)
        gap = pair["M"].values - pair["F"].values
        np.testing.assert_allclose(gap, 1.5, atol=1e-6)


class TestMlfts:
    def test_identical_sexes_put_all_variability_in_common(self, rng):
        data = latent_series(rng)
        model = fit_mlfts(data, data.copy(), SPEC)
        for s in ("F", "M"):
            assert model.within_cluster_variability[s] == pytest.approx(1.0)
            assert model.specific[s].n_components == 0

    def test_constant_identical_sexes_hit_degenerate_convention(self):
        data = np.tile(np.linspace(-2.0, 1.0, 6), (8, 1))
        model = fit_mlfts(data, data.copy(), SPEC)
        assert model.within_cluster_variability == {"F": 1.0, "M": 1.0}

    def test_mirrored_sexes_have_no_common_part(self, rng):
        f = latent_series(rng)
        mean_f = f.mean(axis=0)
        m = 2.0 * mean_f - f  # centered male = -centered female
        model = fit_mlfts(f, m, SPEC)
        for s in ("F", "M"):
            assert model.within_cluster_variability[s] == pytest.approx(0.0, abs=1e-12)
        assert model.common.n_components == 0

    def test_ratio_between_zero_and_one(self, rng):
        for _ in range(4):
            model = fit_mlfts(latent_series(rng), latent_series(rng), SPEC)
            for val in model.within_cluster_variability.values():
                assert 0.0 <= val <= 1.0

    def test_forecast_shape_and_info(self, rng):
        pair = fit_forecast_mlfts(latent_series(rng), latent_series(rng), SPEC, 6)
        for s in ("F", "M"):
            assert pair[s].values.shape == (6, 8)
            assert "within_cluster_variability" in pair[s].info
            assert pair[s].info["l"][s] >= 0

    def test_identical_sexes_match_ufts(self, rng):
        data = latent_series(rng)
        pair = fit_forecast_mlfts(data, data.copy(), SPEC, 4)
        solo = fit_forecast_ufts(data, SPEC, 4)
        np.testing.assert_allclose(pair["F"].values, solo.values, atol=1e-6)


class TestFanova:
    def test_effects_match_direct_averaging(self, rng):
        groups = ["g1", "g2", "g3"]
        data = panel_data(rng, groups)
        dec = fit_fanova(data, groups)
        stacked = np.stack([data[(g, s)] for g in groups for s in ("F", "M")])
        grand = stacked.mean(axis=0).mean(axis=0)
        np.testing.assert_allclose(dec.grand, grand, atol=1e-12)
        for g in groups:
            rows = np.stack([data[(g, s)] for s in ("F", "M")])
            effect = rows.mean(axis=0).mean(axis=0) - grand
            np.testing.assert_allclose(dec.row_effects[g], effect, atol=1e-12)
        for s in ("F", "M"):
            cols = np.stack([data[(g, s)] for g in groups])
            effect = cols.mean(axis=0).mean(axis=0) - grand
            np.testing.assert_allclose(dec.col_effects[s], effect, atol=1e-12)

    def test_zero_sum_constraints(self, rng):
        groups = [f"g{i}" for i in range(5)]
        dec = fit_fanova(panel_data(rng, groups), groups)
        row_sum = sum(dec.row_effects[g] for g in groups)
        col_sum = sum(dec.col_effects[s] for s in ("F", "M"))
        np.testing.assert_allclose(row_sum, 0.0, atol=1e-10)
        np.testing.assert_allclose(col_sum, 0.0, atol=1e-10)

    def test_reconstruction_identity(self, rng):
        groups = ["a", "b"]
        data = panel_data(rng, groups)
        dec = fit_fanova(data, groups)
        for g in groups:
            for s in ("F", "M"):
                recon = dec.grand + dec.row_effects[g] + dec.col_effects[s] + dec.residuals[(g, s)]
                np.testing.assert_allclose(recon, data[(g, s)], atol=1e-12)

    def test_missing_cell_rejected(self, rng):
        data = panel_data(rng, ["a", "b"])
        del data[("b", "M")]
        with pytest.raises(PanelDataError):
            fit_fanova(data, ["a", "b"])

    def test_forecasts_match_mfts_when_effects_are_static(self, rng):
        # the effects are constant over time, so per-group dynamics are
        # untouched and the residual-pair strategy reduces to plain MFTS
        groups = ["a", "b"]
        data = panel_data(rng, groups)
        fanova = fit_forecast_fanova(data, groups, SPEC, 4)
        for g in groups:
            pair = fit_forecast_mfts(data[(g, "F")], data[(g, "M")], SPEC, 4)
            for s in ("F", "M"):
                np.testing.assert_allclose(
                    fanova[(g, s)].values, pair[s].values, atol=1e-6
                )


class TestHdfpca:
    @pytest.mark.filterwarnings("ignore:retaining")
    def test_full_rank_factors_reproduce_per_series_forecasts(self, rng):
        # the rank-2 construction clamps p0 with a warning, by design
        groups = ["a", "b", "c"]
        data = {g: latent_series(rng) for g in groups}
        spec = ModelSpec(kind="hdfpca", selection=SelectionPolicy(), p0=3, r=3)
        joint = fit_forecast_hdfpca(data, groups, spec, 4)
        for g in groups:
            model = fit_fpca(data[g])
            k = min(3, model.n_components)
            manual = np.tile(model.mean, (4, 1))
            for j in range(k):
                path = EtsScoreForecaster()(model.scores[:, j], 4)
                manual += np.outer(path, model.eigenfunctions[j])
            np.testing.assert_allclose(joint[g].values, manual, atol=1e-8)

    def test_more_factors_than_groups_rejected(self, rng):
        data = {g: latent_series(rng) for g in ("a", "b")}
        with pytest.raises(ValueError):
            fit_hdfpca(data, ["a", "b"], p0=2, r=3)

    def test_p0_clamped_with_warning(self, rng):
        data = {g: latent_series(rng, n=5) for g in ("a", "b")}
        with pytest.warns(UserWarning):
            model = fit_hdfpca(data, ["a", "b"], p0=10, r=2)
        assert model.p0 <= 4

    def test_identical_groups_share_one_factor(self, rng):
        base = latent_series(rng)
        data = {g: base.copy() for g in ("a", "b", "c")}
        fcs = fit_forecast_hdfpca(
            data, ["a", "b", "c"], ModelSpec(kind="hdfpca", p0=2, r=1), 3
        )
        for g in ("b", "c"):
            np.testing.assert_allclose(fcs[g].values, fcs["a"].values, atol=1e-8)

    def test_loadings_shapes(self, rng):
        data = {g: latent_series(rng) for g in ("a", "b", "c", "d")}
        model = fit_hdfpca(data, ["a", "b", "c", "d"], p0=2, r=2)
        assert len(model.loadings) == 2  # one block per retained score index
        for lam in model.loadings:
            assert lam.shape == (4, 2)


class TestDensityForecast:
    def test_rows_sum_to_radix_and_stay_nonnegative(self, rng):
        logit = rng.normal(-1.0, 2.0, size=(5, 7))
        fc = forecast_density(logit, radix=1.0e5, model="ufts")
        assert fc.densities.shape == (5, 8)
        assert np.all(fc.densities >= 0.0)
        np.testing.assert_allclose(fc.densities.sum(axis=1), 1.0e5, rtol=1e-12)
        np.testing.assert_array_equal(fc.horizons, np.arange(1, 6))


class TestPanelDispatch:
    def test_all_kinds_cover_all_units(self, rng):
        groups = ["a", "b"]
        data = panel_data(rng, groups, n=10, m=6)
        for kind in MODEL_KINDS:
            spec = ModelSpec(kind=kind, selection=SelectionPolicy(), p0=2, r=2)
            out, info = fit_forecast_panel(data, groups, spec, horizon=3)
            assert set(out) == {(g, s) for g in groups for s in ("F", "M")}
            for vals in out.values():
                assert vals.shape == (3, 6)
                assert np.all(np.isfinite(vals))
            assert info

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec(kind="arima")

    def test_score_forecaster_is_used(self, rng):
        groups = ["a"]
        data = panel_data(rng, groups, n=10, m=6)
        spec = ModelSpec(kind="ufts", selection=SelectionPolicy())
        out, _ = fit_forecast_panel(
            data, groups, spec, horizon=4, score_forecaster=last_value_forecaster
        )
        # a last-value forecaster makes every horizon identical
        vals = out[("a", "F")]
        np.testing.assert_allclose(vals, np.tile(vals[0], (4, 1)), atol=1e-12)


class TestEtsScoreForecaster:
    def test_records_family_per_series(self, rng):
        forecaster = EtsScoreForecaster()
        for series in (np.cumsum(rng.normal(0.2, 0.5, 12)), rng.normal(0.0, 0.1, 12)):
            out = forecaster(series, 3)
            assert out.shape == (3,)
        assert len(forecaster.families) == 2
        assert all(f in ("ANN", "AAN", "AAdN") for f in forecaster.families)
