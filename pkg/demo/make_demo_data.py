"""Generate the bundled demo panel.

Two regional populations plus their pooled national aggregate, sexes
female and male, ages 0 to 30, years 1996 to 2013.  Each series is a
smooth mortality hump whose mode drifts upward over time with small
seeded perturbations, so the demo exercises trend extrapolation without
resembling any published life table.  Rerunning this script reproduces
demo_panel.csv byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

RADIX = 100_000.0
AGES = np.arange(31)
YEARS = np.arange(1996, 2014)

SEXES = {
    "female": {"mode0": 21.0, "drift": 0.12, "width": 5.5, "infant": 0.030},
    "male": {"mode0": 19.0, "drift": 0.10, "width": 6.2, "infant": 0.045},
}
REGIONS = {"north": 0.6, "south": -0.6}


def _series(rng: np.random.Generator, sex_cfg: dict, offset: float) -> np.ndarray:
    """Integer death counts, one row per year, rows summing near RADIX."""
    mode_noise = rng.normal(0.0, 0.15, size=YEARS.size)
    width_noise = rng.normal(0.0, 0.05, size=YEARS.size)
    shape_noise = rng.normal(0.0, 0.02, size=(YEARS.size, AGES.size))
    rows = np.empty((YEARS.size, AGES.size))
    for t in range(YEARS.size):
        mode = sex_cfg["mode0"] + offset + sex_cfg["drift"] * t + mode_noise[t]
        width = sex_cfg["width"] * np.exp(width_noise[t])
        hump = np.exp(-0.5 * ((AGES - mode) / width) ** 2)
        infant = np.zeros_like(hump)
        infant[0] = sex_cfg["infant"] * (0.98**t)
        dens = (hump / hump.sum()) * (1.0 - infant[0]) + infant
        dens = dens * np.exp(shape_noise[t])
        dens = dens / dens.sum()
        rows[t] = np.round(dens * RADIX)
    return rows


def main() -> None:
    rng = np.random.default_rng(42)
    counts: dict[tuple[str, str], np.ndarray] = {}
    for region, offset in REGIONS.items():
        for sex, sex_cfg in SEXES.items():
            counts[(region, sex)] = _series(rng, sex_cfg, offset)
    for sex in SEXES:
        pooled = 0.5 * (counts[("north", sex)] + counts[("south", sex)])
        counts[("total", sex)] = np.round(pooled)

    records = []
    for region in ["north", "south", "total"]:
        for sex in SEXES:
            rows = counts[(region, sex)]
            for t, year in enumerate(YEARS):
                for a, age in enumerate(AGES):
                    records.append(
                        {
                            "region": region,
                            "sex": sex,
                            "year": int(year),
                            "age": int(age),
                            "deaths": int(rows[t, a]),
                        }
                    )
    frame = pd.DataFrame(records)
    out = Path(__file__).with_name("demo_panel.csv")
    frame.to_csv(out, index=False)
    print(f"wrote {len(frame)} rows to {out}")


if __name__ == "__main__":
    main()
