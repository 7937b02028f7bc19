#!/usr/bin/env python3
"""Generate the binary and CSV fixtures under tests/fixtures/.

Run from the repository root:  python3 tools/make_fixtures.py
Prints the oracle values that the unit tests assert against.
"""
import pathlib

import numpy as np
import pandas as pd

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"
OUT.mkdir(parents=True, exist_ok=True)


def mini_dta():
    df = pd.DataFrame(
        {
            "alpha": np.array([1.5, -2.25], dtype=np.float64),
            "beta": np.array([3, -1], dtype=np.int8),
        }
    )
    df.to_stata(OUT / "mini_117.dta", version=117, write_index=False)
    df.to_stata(OUT / "mini_118.dta", version=118, write_index=False)
    print("mini_{117,118}.dta: alpha =", df["alpha"].tolist(), " beta =", df["beta"].tolist())


def missing_dta():
    df = pd.DataFrame(
        {
            "v_float": np.array([1.0, np.nan, 3.5], dtype=np.float32),
            "v_double": np.array([np.nan, 2.0, -4.25], dtype=np.float64),
            "v_int": np.array([7, -3, 250], dtype=np.int16),
        }
    )
    df.to_stata(OUT / "missing_117.dta", version=117, write_index=False)
    print("missing_117.dta: NaN at v_float[1], v_double[0]")


def wide_types_dta():
    df = pd.DataFrame(
        {
            "b": np.array([-5, 100], dtype=np.int8),
            "h": np.array([-1000, 32000], dtype=np.int16),
            "l": np.array([-70000, 2000000], dtype=np.int32),
            "f": np.array([0.25, -1.5], dtype=np.float32),
            "d": np.array([3.141592653589793, -2.718281828459045], dtype=np.float64),
        }
    )
    df.to_stata(OUT / "types_118.dta", version=118, write_index=False)
    print("types_118.dta: byte/int/long/float/double columns")


def mini_csv():
    rows = [
        "t,y,x1,x2,grade",
        "1,2.5,0.1,-1.0,a",
        "0,1.0,0.4,0.5,b",
        "1,4.0,-0.3,,c",
        "0,0.5,0.9,1.5,a",
        "1,3.0,0.2,0.7,b",
        "0,1.5,-0.6,-0.2,a",
    ]
    (OUT / "mini.csv").write_text("\n".join(rows) + "\n")
    print("mini.csv: 6 data rows, one missing x2 (row 3 dropped), grade in {a,b,c}")


def synth_cohort():
    rng = np.random.default_rng(20260819)
    n = 400
    mage = rng.integers(16, 45, n).astype(np.int16)
    mmarried = rng.integers(0, 2, n).astype(np.int8)
    alcohol = (rng.random(n) < 0.08).astype(np.int8)
    deadkids = (rng.random(n) < 0.25).astype(np.int8)
    medu = rng.integers(6, 18, n).astype(np.int8)
    fedu = rng.integers(0, 18, n).astype(np.int8)
    nprenatal = rng.integers(0, 21, n).astype(np.int8)
    monthslb = rng.integers(0, 140, n).astype(np.int16)
    mrace = rng.integers(0, 2, n).astype(np.int8)
    fbaby = rng.integers(0, 2, n).astype(np.int8)
    logit = -1.1 - 0.04 * (mage - 27) - 0.5 * mmarried + 0.7 * alcohol - 0.06 * (medu - 12)
    mbsmoke = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.int8)
    bweight = (
        3400.0
        + 9.0 * (mage - 27)
        + 45.0 * mmarried
        + 16.0 * (medu - 12)
        - 230.0 * mbsmoke
        + rng.normal(0.0, 430.0, n)
    ).round(0)
    df = pd.DataFrame(
        {
            "bweight": bweight.astype(np.float64),
            "mbsmoke": mbsmoke,
            "mage": mage,
            "mmarried": mmarried,
            "alcohol": alcohol,
            "deadkids": deadkids,
            "medu": medu,
            "fedu": fedu,
            "nprenatal": nprenatal,
            "monthslb": monthslb,
            "mrace": mrace,
            "fbaby": fbaby,
        }
    )
    df.to_stata(OUT / "synth_cohort_118.dta", version=118, write_index=False)
    df.to_csv(OUT / "synth_cohort.csv", index=False)
    treated = df[df.mbsmoke == 1].bweight
    control = df[df.mbsmoke == 0].bweight
    print(
        f"synth_cohort: n={n} treated={len(treated)} "
        f"naive={treated.mean() - control.mean():.10f}"
    )


if __name__ == "__main__":
    mini_dta()
    missing_dta()
    wide_types_dta()
    mini_csv()
    synth_cohort()
