"""Regenerate the bundled regression datasets deterministically.

The two files under src/netoco/data/ are local stand-ins shaped exactly like
the public LIBSVM regression sets of the same names (mg: 1385 rows, 6
features; bodyfat: 252 rows, 14 features), for environments without network
access. Replacing them with the genuine files is a drop-in swap; nothing in
the package depends on the values beyond shape and finiteness.

mg mirrors the original construction: a Mackey-Glass delay series, windowed so
six consecutive samples predict the next one. bodyfat is a seeded synthetic
anthropometric table whose target is a noisy linear read-out of a latent
adiposity factor.

Usage: python tools/make_datasets.py [output_dir]
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

MG_ROWS = 1385
MG_FEATURES = 6
BODYFAT_ROWS = 252
BODYFAT_FEATURES = 14


def mackey_glass(length: int, *, tau: int = 17, beta: float = 0.2, gamma: float = 0.1,
                 exponent: float = 10.0, dt: float = 1.0, burn_in: int = 500) -> np.ndarray:
    total = length + burn_in
    series = np.empty(total)
    history = 1.2  # constant pre-history
    for t in range(total):
        delayed = series[t - tau] if t >= tau else history
        current = series[t - 1] if t >= 1 else history
        series[t] = current + dt * (beta * delayed / (1.0 + delayed**exponent) - gamma * current)
    return series[burn_in:]


def make_mg() -> list[tuple[float, np.ndarray]]:
    series = mackey_glass(MG_ROWS + MG_FEATURES)
    rows = []
    for start in range(MG_ROWS):
        window = series[start : start + MG_FEATURES]
        label = series[start + MG_FEATURES]
        rows.append((float(label), np.asarray(window, dtype=float)))
    return rows


def make_bodyfat() -> list[tuple[float, np.ndarray]]:
    rng = np.random.default_rng(np.random.SeedSequence(252))
    adiposity = rng.normal(0.0, 1.0, BODYFAT_ROWS)
    frame = rng.normal(0.0, 1.0, BODYFAT_ROWS)
    age = np.clip(44 + 12 * rng.standard_normal(BODYFAT_ROWS), 22, 81)
    height = np.clip(70 + 2.5 * frame + rng.normal(0, 1.5, BODYFAT_ROWS), 62, 78)
    weight = np.clip(
        178 + 20 * frame + 18 * adiposity + rng.normal(0, 8, BODYFAT_ROWS), 118, 363
    )
    circumferences = []
    baselines = [37.8, 100.8, 92.6, 99.9, 59.4, 38.6, 23.1, 32.3, 28.7, 18.2]
    gains = [1.9, 8.4, 10.8, 7.1, 4.3, 2.8, 1.5, 2.0, 1.2, 0.8]
    for base, gain in zip(baselines, gains):
        circumferences.append(
            base + gain * adiposity + 0.35 * gain * frame
            + rng.normal(0, 0.25 * gain, BODYFAT_ROWS)
        )
    density = 1.0554 - 0.019 * adiposity + rng.normal(0, 0.002, BODYFAT_ROWS)
    table = np.column_stack([density, age, weight, height] + circumferences)
    fat = np.clip(19.0 + 8.0 * adiposity + rng.normal(0, 1.2, BODYFAT_ROWS), 0.0, 47.5)
    return [(float(fat[i]), table[i]) for i in range(BODYFAT_ROWS)]


def write_sparse(rows, path: Path):
    lines = []
    for label, features in rows:
        parts = [repr(round(float(label), 6))]
        for index, value in enumerate(features, start=1):
            value = round(float(value), 6)
            if value != 0.0:
                parts.append(f"{index}:{value!r}")
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def main() -> int:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src" / "netoco" / "data"
    out.mkdir(parents=True, exist_ok=True)
    mg = make_mg()
    assert len(mg) == MG_ROWS and all(len(f) == MG_FEATURES for _, f in mg)
    write_sparse(mg, out / "mg.libsvm")
    bodyfat = make_bodyfat()
    assert len(bodyfat) == BODYFAT_ROWS and all(len(f) == BODYFAT_FEATURES for _, f in bodyfat)
    write_sparse(bodyfat, out / "bodyfat.libsvm")
    print(f"wrote {out / 'mg.libsvm'} ({MG_ROWS} x {MG_FEATURES})")
    print(f"wrote {out / 'bodyfat.libsvm'} ({BODYFAT_ROWS} x {BODYFAT_FEATURES})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
