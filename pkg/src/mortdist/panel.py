"""Ingestion, validation, and serialization of death-count panels.

A panel holds one matrix of life-table death counts per (group, sex)
pair.  Rows are calendar years, columns are single-year ages, and every
row sums to a common radix (100000 by default).  Zero cells are legal
and preserved; they are handled downstream when logarithms are taken.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

DEFAULT_RADIX = 1.0e5

#: relative tolerance on row sums after normalization
ROW_SUM_RTOL = 1.0e-6

#: raw rows further than this (relative) from the radix trigger a warning
RESCALE_WARN_RTOL = 5.0e-3

DEFAULT_SCHEMA: Mapping[str, str] = {
    "group": "group",
    "sex": "sex",
    "year": "year",
    "age": "age",
    "deaths": "deaths",
}

_SEX_ALIASES = {
    "f": "F",
    "female": "F",
    "fem": "F",
    "m": "M",
    "male": "M",
}


class PanelDataError(ValueError):
    """The input stream cannot be assembled into a valid panel."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class AgeGrid:
    """Contiguous single-year integer age grid with at least three ages."""

    ages: np.ndarray

    def __post_init__(self) -> None:
        ages = np.asarray(self.ages, dtype=int)
        if ages.ndim != 1 or ages.size < 3:
            raise PanelDataError("age grid needs at least three ages")
        if np.any(np.diff(ages) != 1):
            raise PanelDataError("age grid must be contiguous single years")
        object.__setattr__(self, "ages", _readonly(ages))

    def __len__(self) -> int:
        return int(self.ages.size)

    def __eq__(self, other) -> bool:
        return isinstance(other, AgeGrid) and np.array_equal(self.ages, other.ages)

    def __hash__(self) -> int:
        return hash((int(self.ages[0]), int(self.ages[-1])))


@dataclass(eq=False)
class DeathDensitySeries:
    """One (group, sex) block: years x ages matrix of death counts.

    Attributes
    ----------
    grid : AgeGrid
        Shared age grid.
    years : ndarray of int
        Strictly increasing, unit step.
    values : ndarray, shape (n_years, n_ages)
        Nonnegative death counts; each row sums to ``radix`` within
        relative tolerance ``ROW_SUM_RTOL``.
    radix : float
        Common row total.
    """

    grid: AgeGrid
    years: np.ndarray
    values: np.ndarray
    radix: float = DEFAULT_RADIX

    def __post_init__(self) -> None:
        years = np.asarray(self.years, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if years.ndim != 1:
            raise PanelDataError("years must be one-dimensional")
        if years.size > 1 and np.any(np.diff(years) != 1):
            raise PanelDataError("years must be strictly increasing with unit step")
        if values.shape != (years.size, len(self.grid)):
            raise PanelDataError(
                f"values shape {values.shape} does not match "
                f"{years.size} years x {len(self.grid)} ages"
            )
        if not np.all(np.isfinite(values)):
            raise PanelDataError("death counts must be finite")
        if np.any(values < 0):
            raise PanelDataError("death counts must be nonnegative")
        if self.radix <= 0:
            raise PanelDataError("radix must be positive")
        sums = values.sum(axis=1)
        off = np.abs(sums - self.radix) > ROW_SUM_RTOL * self.radix
        if np.any(off):
            year = int(years[np.argmax(off)])
            raise PanelDataError(
                f"row for year {year} sums to {sums[np.argmax(off)]:.6g}, "
                f"expected radix {self.radix:.6g}"
            )
        self.years = _readonly(years)
        self.values = _readonly(values)

    @classmethod
    def from_counts(
        cls,
        grid: AgeGrid,
        years: Sequence[int],
        counts: np.ndarray,
        radix: float = DEFAULT_RADIX,
        label: str = "",
    ) -> "DeathDensitySeries":
        """Rescale raw count rows to the radix and build a series.

        Rows whose raw total is further than ``RESCALE_WARN_RTOL``
        (relative) from the radix are rescaled with a warning; rows of
        all zeros are rejected.
        """
        counts = np.asarray(counts, dtype=float)
        sums = counts.sum(axis=1)
        if np.any(sums <= 0):
            bad = int(np.asarray(years)[np.argmax(sums <= 0)])
            raise PanelDataError(f"{label or 'series'}: year {bad} has zero total deaths")
        rel = np.abs(sums - radix) / radix
        if np.any(rel > RESCALE_WARN_RTOL):
            worst = np.argmax(rel)
            warnings.warn(
                f"{label or 'series'}: year {int(np.asarray(years)[worst])} total "
                f"{sums[worst]:.6g} is {100 * rel[worst]:.2f}% away from radix "
                f"{radix:.6g}; rows rescaled",
                stacklevel=2,
            )
        values = counts * (radix / sums)[:, None]
        return cls(grid=grid, years=years, values=values, radix=radix)

    @property
    def n_years(self) -> int:
        return int(self.years.size)


@dataclass(eq=False)
class DeathDensityPanel:
    """Collection of death-count series indexed by (group, sex).

    Groups keep a declared order; every series shares the same age grid,
    year range, and radix.  ``national`` optionally names the group used
    as the reference series for divergence diagnostics.
    """

    groups: list[str]
    series: dict[tuple[str, str], DeathDensitySeries]
    national: str | None = None

    def __post_init__(self) -> None:
        if not self.groups:
            raise PanelDataError("panel needs at least one group")
        if len(set(self.groups)) != len(self.groups):
            raise PanelDataError("group names must be unique")
        sexes = sorted({s for (_, s) in self.series})
        if sexes != ["F", "M"]:
            raise PanelDataError(f"panel needs sexes ['F', 'M'], found {sexes}")
        ref = None
        for g in self.groups:
            for s in sexes:
                if (g, s) not in self.series:
                    raise PanelDataError(f"panel is missing series for ({g!r}, {s!r})")
                blk = self.series[(g, s)]
                if ref is None:
                    ref = blk
                else:
                    if blk.grid != ref.grid:
                        raise PanelDataError(f"({g!r}, {s!r}) uses a different age grid")
                    if not np.array_equal(blk.years, ref.years):
                        raise PanelDataError(f"({g!r}, {s!r}) covers different years")
                    if blk.radix != ref.radix:
                        raise PanelDataError(f"({g!r}, {s!r}) uses a different radix")
        extra = {g for (g, _) in self.series} - set(self.groups)
        if extra:
            raise PanelDataError(f"series present for undeclared groups: {sorted(extra)}")
        if self.national is not None and self.national not in self.groups:
            raise PanelDataError(f"national group {self.national!r} not in panel")
        self._sexes = sexes

    @property
    def sexes(self) -> list[str]:
        return list(self._sexes)

    @property
    def grid(self) -> AgeGrid:
        return next(iter(self.series.values())).grid

    @property
    def years(self) -> np.ndarray:
        return next(iter(self.series.values())).years

    @property
    def radix(self) -> float:
        return next(iter(self.series.values())).radix

    @property
    def modeled_groups(self) -> list[str]:
        """Groups entering the forecasting exercise (national excluded)."""
        return [g for g in self.groups if g != self.national]

    def get(self, group: str, sex: str) -> DeathDensitySeries:
        try:
            return self.series[(group, sex)]
        except KeyError:
            raise PanelDataError(f"no series for ({group!r}, {sex!r})") from None


@dataclass(frozen=True)
class SampleSplit:
    """Contiguous, ordered, disjoint year partition."""

    train_years: np.ndarray
    validation_years: np.ndarray
    test_years: np.ndarray

    def __post_init__(self) -> None:
        chunks = [
            np.asarray(self.train_years, dtype=int),
            np.asarray(self.validation_years, dtype=int),
            np.asarray(self.test_years, dtype=int),
        ]
        for c in chunks:
            if c.size == 0:
                raise PanelDataError("every split segment must be nonempty")
        joined = np.concatenate(chunks)
        if np.any(np.diff(joined) != 1):
            raise PanelDataError("split segments must be contiguous and ordered")
        object.__setattr__(self, "train_years", _readonly(chunks[0]))
        object.__setattr__(self, "validation_years", _readonly(chunks[1]))
        object.__setattr__(self, "test_years", _readonly(chunks[2]))


def load_panel(
    source,
    schema: Mapping[str, str] | None = None,
    *,
    delimiter: str | None = None,
    radix: float = DEFAULT_RADIX,
    group_order: Sequence[str] | None = None,
    national: str | None = None,
) -> DeathDensityPanel:
    """Read a delimited text table of death counts into a panel.

    Parameters
    ----------
    source : path or file-like
        Delimited text with a header row; comma and tab both work when
        ``delimiter`` is left unset.
    schema : mapping, optional
        Maps the canonical column names (``group``, ``sex``, ``year``,
        ``age``, ``deaths``) to the column names used in the file.
    delimiter : str, optional
        Explicit field delimiter; sniffed when omitted.
    radix : float
        Row total that every (group, sex, year) row is rescaled to.
    group_order : sequence of str, optional
        Declared group ordering; defaults to order of first appearance.
    national : str, optional
        Group identifier to treat as the reference series in diagnostics.

    Raises
    ------
    PanelDataError
        On missing columns, negative or non-numeric counts, duplicated
        cells, missing (group, sex, year, age) combinations, or
        non-contiguous years.
    """
    colmap = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(DEFAULT_SCHEMA)
        if unknown:
            raise PanelDataError(f"unknown schema keys: {sorted(unknown)}")
        colmap.update(schema)

    if delimiter is None:
        df = pd.read_csv(source, sep=None, engine="python")
    else:
        df = pd.read_csv(source, sep=delimiter)

    missing = [v for v in colmap.values() if v not in df.columns]
    if missing:
        raise PanelDataError(f"input is missing columns: {missing}")
    df = df.rename(columns={v: k for k, v in colmap.items()})[list(DEFAULT_SCHEMA)]

    sex_raw = df["sex"].astype(str).str.strip()
    sex_norm = sex_raw.str.lower().map(_SEX_ALIASES)
    if sex_norm.isna().any():
        bad = sex_raw[sex_norm.isna()].iloc[0]
        raise PanelDataError(f"unrecognized sex label {bad!r}; expected F or M")
    df["sex"] = sex_norm

    for col in ("year", "age"):
        vals = pd.to_numeric(df[col], errors="coerce")
        if vals.isna().any() or np.any(vals != vals.astype(int)):
            raise PanelDataError(f"column {colmap[col]!r} must hold integers")
        df[col] = vals.astype(int)

    deaths = pd.to_numeric(df["deaths"], errors="coerce")
    if deaths.isna().any():
        row = int(df.index[deaths.isna()][0])
        raise PanelDataError(f"non-numeric death count at input row {row}")
    if np.any(deaths < 0):
        row = int(df.index[deaths < 0][0])
        raise PanelDataError(f"negative death count at input row {row}")
    df["deaths"] = deaths.astype(float)

    dup = df.duplicated(subset=["group", "sex", "year", "age"])
    if dup.any():
        r = df[dup].iloc[0]
        raise PanelDataError(
            f"duplicate cell for ({r['group']!r}, {r['sex']!r}, "
            f"year {int(r['year'])}, age {int(r['age'])})"
        )

    grid = AgeGrid(np.sort(df["age"].unique()))
    years = np.sort(df["year"].unique())
    if np.any(np.diff(years) != 1):
        gap = int(years[np.argmax(np.diff(years) != 1)])
        raise PanelDataError(f"years are not contiguous after {gap}")

    observed_groups = list(pd.unique(df["group"].astype(str)))
    if group_order is not None:
        group_order = [str(g) for g in group_order]
        if set(group_order) != set(observed_groups):
            raise PanelDataError(
                "declared group order does not match the groups in the data"
            )
        groups = list(group_order)
    else:
        groups = observed_groups

    sexes = sorted(df["sex"].unique())
    series: dict[tuple[str, str], DeathDensitySeries] = {}
    for g in groups:
        for s in sexes:
            sub = df[(df["group"].astype(str) == g) & (df["sex"] == s)]
            if sub.empty:
                raise PanelDataError(f"no rows for ({g!r}, {s!r})")
            wide = sub.pivot(index="year", columns="age", values="deaths")
            wide = wide.reindex(index=years, columns=grid.ages)
            if wide.isna().any().any():
                stacked = wide.isna().stack()
                year, age = stacked[stacked].index[0]
                raise PanelDataError(
                    f"missing cell ({g!r}, {s!r}, year {int(year)}, age {int(age)})"
                )
            series[(g, s)] = DeathDensitySeries.from_counts(
                grid, years, wide.to_numpy(), radix=radix, label=f"({g}, {s})"
            )

    return DeathDensityPanel(groups=groups, series=series, national=national)


def normalize_to_probability(series) -> np.ndarray:
    """Return the years x ages matrix of age-at-death probabilities.

    Accepts a series or a raw counts matrix.  Each row is divided by its
    own total (equal to the radix up to the stored tolerance) so the
    output rows sum to one within 1e-9.
    """
    v = np.asarray(getattr(series, "values", series), dtype=float)
    out = v / v.sum(axis=1, keepdims=True)
    return out


def split_years(panel: DeathDensityPanel, proportions: Sequence[float]) -> SampleSplit:
    """Partition the panel's years into train/validation/test segments.

    Fractions must be positive and sum to one; they are turned into
    contiguous counts by largest-remainder rounding.  Each segment must
    end up nonempty.
    """
    p = np.asarray(proportions, dtype=float)
    if p.shape != (3,):
        raise PanelDataError("exactly three split fractions are required")
    if np.any(p <= 0):
        raise PanelDataError("split fractions must be positive")
    if abs(p.sum() - 1.0) > 1e-6:
        raise PanelDataError(f"split fractions sum to {p.sum():.8f}, expected 1")

    years = panel.years
    n = years.size
    raw = p * n
    base = np.floor(raw).astype(int)
    rem = raw - base
    short = n - int(base.sum())
    # distribute leftovers to the largest fractional parts, earlier segment wins ties
    for idx in np.argsort(-rem, kind="stable")[:short]:
        base[idx] += 1
    if np.any(base == 0):
        raise PanelDataError(
            f"split of {n} years into fractions {p.tolist()} leaves an empty segment"
        )
    c1, c2, _ = base
    return SampleSplit(
        train_years=years[:c1],
        validation_years=years[c1 : c1 + c2],
        test_years=years[c1 + c2 :],
    )


def save_panel(panel: DeathDensityPanel, directory) -> Path:
    """Serialize a panel as per-(group, sex) CSV matrices plus a manifest.

    The manifest records the age grid, years, radix, declared group
    order, and the national identifier, so the directory round-trips
    through :func:`load_panel_dir`.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for i, g in enumerate(panel.groups):
        for s in panel.sexes:
            blk = panel.get(g, s)
            name = f"{i:03d}_{s}.csv"
            frame = pd.DataFrame(
                blk.values, index=blk.years, columns=blk.grid.ages
            )
            frame.index.name = "year"
            frame.to_csv(directory / name, float_format="%.12g")
            files[f"{g}|{s}"] = name
    manifest = {
        "ages": panel.grid.ages.tolist(),
        "years": panel.years.tolist(),
        "radix": panel.radix,
        "groups": panel.groups,
        "sexes": panel.sexes,
        "national": panel.national,
        "files": files,
    }
    with open(directory / "panel.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def load_panel_dir(directory) -> DeathDensityPanel:
    """Rebuild a panel serialized by :func:`save_panel`."""
    directory = Path(directory)
    with open(directory / "panel.json") as fh:
        manifest = json.load(fh)
    grid = AgeGrid(np.asarray(manifest["ages"]))
    years = np.asarray(manifest["years"])
    series = {}
    for key, name in manifest["files"].items():
        g, s = key.split("|")
        frame = pd.read_csv(directory / name, index_col="year")
        series[(g, s)] = DeathDensitySeries(
            grid=grid,
            years=years,
            values=frame.to_numpy(dtype=float),
            radix=float(manifest["radix"]),
        )
    return DeathDensityPanel(
        groups=list(manifest["groups"]),
        series=series,
        national=manifest.get("national"),
    )
