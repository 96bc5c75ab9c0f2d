"""Synthetic battery telemetry with a known additive state-of-health law.

Real battery SoH datasets are proprietary; this generator produces a stand-in
with the usual feature families (chemistry, usage stress, environment, age)
and a documented ground truth, so downstream attribution results can be
checked against a known structure. The coefficients are artifact choices,
not measured physics.

Ground truth (before noise and clamping to [0, 1]):

    soh = 1.02
          - 8e-5  * cycle_count
          - 2e-3  * max(0, avg_temperature_c - 25)
          - 1e-3  * avg_depth_of_discharge_pct / 10
          - 0.01  * max(0, avg_charge_rate_c - 1)      # charge-rate penalty
          - 5e-5  * calendar_age_days
          - type_offset                                # LFP 0.00, NMC 0.02, NCA 0.03

storage_soc_pct is sampled but never enters the law: it is a deliberate
dummy feature for attribution sanity checks.
"""

from __future__ import annotations

import numpy as np

from .model import CATEGORICAL, NUMERIC, DataRow, DataTable, Feature, FeatureSchema

BATTERY_TYPES = ("LFP", "NMC", "NCA")
_TYPE_OFFSET = {"LFP": 0.0, "NMC": 0.02, "NCA": 0.03}

BATTERY_SCHEMA = FeatureSchema(
    features=(
        Feature("battery_type", CATEGORICAL, categories=BATTERY_TYPES),
        Feature("cycle_count", NUMERIC),
        Feature("avg_temperature_c", NUMERIC),
        Feature("avg_depth_of_discharge_pct", NUMERIC),
        Feature("avg_charge_rate_c", NUMERIC),
        Feature("calendar_age_days", NUMERIC),
        Feature("storage_soc_pct", NUMERIC),
    ),
    target_name="soh",
)


def soh_ground_truth(row: DataRow) -> float:
    """Noise-free SoH for one schema-ordered row, clamped to [0, 1]."""
    battery_type, cycles, temp, dod, rate, age, _storage = row
    soh = (
        1.02
        - 8e-5 * cycles
        - 2e-3 * max(0.0, temp - 25.0)
        - 1e-3 * dod / 10.0
        - 0.01 * max(0.0, rate - 1.0)
        - 5e-5 * age
        - _TYPE_OFFSET[battery_type]
    )
    return min(1.0, max(0.0, soh))


def generate_synthetic_battery_table(n: int, noise_sigma: float, seed: int) -> DataTable:
    """n rows over BATTERY_SCHEMA with SoH = ground truth + Gaussian noise.

    Deterministic per seed; feature columns are drawn in schema order so the
    stream layout is stable across releases of this module.
    """
    if n <= 0:
        raise ValueError(f"n must be >= 1, got {n}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)

    type_codes = rng.integers(0, len(BATTERY_TYPES), size=n)
    cycles = rng.integers(0, 3001, size=n).astype(np.float64)
    temp = np.round(rng.uniform(-5.0, 55.0, size=n), 2)
    dod = np.round(rng.uniform(5.0, 100.0, size=n), 2)
    rate = np.round(rng.uniform(0.1, 3.0, size=n), 3)
    age = rng.integers(0, 4001, size=n).astype(np.float64)
    storage = np.round(rng.uniform(0.0, 100.0, size=n), 2)
    noise = rng.normal(0.0, noise_sigma, size=n)

    rows = []
    targets = []
    for i in range(n):
        row = (
            BATTERY_TYPES[type_codes[i]],
            float(cycles[i]),
            float(temp[i]),
            float(dod[i]),
            float(rate[i]),
            float(age[i]),
            float(storage[i]),
        )
        rows.append(row)
        targets.append(min(1.0, max(0.0, soh_ground_truth(row) + float(noise[i]))))
    return DataTable(schema=BATTERY_SCHEMA, rows=tuple(rows), targets=tuple(targets))
