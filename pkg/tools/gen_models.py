"""Regenerate the shipped sample models and unsafe-set files.

Deterministic: running this script rewrites ``models/synth_small.json``,
``models/tep_like.json`` and ``unsafe/tep_table1.json`` byte-for-byte.
The small plant is a mixed 4-state system with one slow oscillatory
mode; the large one is a 50-state stable surrogate whose five outputs
are scaled to the operating ranges of a well-known chemical-process
benchmark (reactor pressure/temperature and three vessel levels), with
safety limits expressed in deviation coordinates around the operating
point.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from reachmon.io import canonical_json, save_model  # noqa: E402
from reachmon.plant import PlantModel  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]


def rotation_block(radius: float, angle: float) -> np.ndarray:
    return radius * np.array([[np.cos(angle), -np.sin(angle)],
                              [np.sin(angle), np.cos(angle)]])


def synth_small() -> PlantModel:
    rng = np.random.default_rng(20250114)
    modal = np.zeros((4, 4))
    modal[:2, :2] = rotation_block(0.90, 0.15)
    modal[2, 2] = 0.85
    modal[3, 3] = 0.72
    basis = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    basis = basis + 0.15 * rng.standard_normal((4, 4))
    a = basis @ modal @ np.linalg.inv(basis)
    b = rng.standard_normal((4, 2)) * 0.6
    c = rng.standard_normal((3, 4))
    w = 0.02**2 * np.eye(4)
    v = 0.05**2 * np.eye(3)
    return PlantModel(a, b, c, w, v, dt=1.0)


# Output channels of the large surrogate, their operating points, and the
# physical safety limits (deviation offsets are limit - operating point).
TEP_CHANNELS = (
    {"name": "reactor_pressure_kpa", "operating": 2705.0, "high": 2895.0, "low": None,
     "scale": 4.6876},
    {"name": "reactor_temperature_c", "operating": 120.4, "high": 150.0, "low": None,
     "scale": 0.7125},
    {"name": "reactor_level_m3", "operating": 16.55, "high": 21.3, "low": 11.8,
     "scale": 0.0998},
    {"name": "separator_level_m3", "operating": 6.15, "high": 9.0, "low": 3.3,
     "scale": 0.0562},
    {"name": "stripper_level_m3", "operating": 5.05, "high": 6.6, "low": 3.5,
     "scale": 0.0303},
)


def tep_like() -> PlantModel:
    rng = np.random.default_rng(20250115)
    n = 50
    a = np.zeros((n, n))
    for j in range(n // 2):
        radius = 0.85 + 0.05 * j / (n // 2 - 1)
        angle = 0.02 + 0.28 * rng.random()
        a[2 * j:2 * j + 2, 2 * j:2 * j + 2] = rotation_block(radius, angle)
    mix = np.eye(n) + 0.08 * rng.standard_normal((n, n)) / np.sqrt(n)
    a = mix @ a @ np.linalg.inv(mix)
    b = rng.standard_normal((n, 4)) * 0.5
    c = np.zeros((5, n))
    for i, channel in enumerate(TEP_CHANNELS):
        c[i, 10 * i] = channel["scale"]
        c[i] += 0.05 * channel["scale"] * rng.standard_normal(n)
    w = 0.015**2 * np.eye(n)
    v = np.diag([(0.01 * ch["scale"]) ** 2 * 4.0 for ch in TEP_CHANNELS])
    return PlantModel(a, b, c, w, v, dt=1.8)


def tep_unsafe(model: PlantModel) -> dict:
    constraints = []
    for i, channel in enumerate(TEP_CHANNELS):
        row = model.c[i]
        if channel["high"] is not None:
            constraints.append({
                "name": f"{channel['name']}_high",
                "normal": row.tolist(),
                "offset": channel["high"] - channel["operating"],
            })
        if channel["low"] is not None:
            constraints.append({
                "name": f"{channel['name']}_low",
                "normal": (-row).tolist(),
                "offset": channel["operating"] - channel["low"],
            })
    return {"constraints": constraints}


def main() -> None:
    (ROOT / "models").mkdir(exist_ok=True)
    (ROOT / "unsafe").mkdir(exist_ok=True)
    small = synth_small()
    save_model(small, ROOT / "models" / "synth_small.json")
    big = tep_like()
    save_model(big, ROOT / "models" / "tep_like.json")
    unsafe = tep_unsafe(big)
    (ROOT / "unsafe" / "tep_table1.json").write_text(
        canonical_json(unsafe) + "\n", encoding="utf-8"
    )
    for model, label in ((small, "synth_small"), (big, "tep_like")):
        rho = np.max(np.abs(np.linalg.eigvals(model.a)))
        print(f"{label}: n={model.n_states} rho(A)={rho:.4f}")
    print(f"unsafe constraints: {len(unsafe['constraints'])}")


if __name__ == "__main__":
    main()
