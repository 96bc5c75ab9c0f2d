"""Synthetic battery table: determinism, ground-truth law, clamping."""

import pytest

from shapchat.model import save_table_csv
from shapchat.synth import (
    BATTERY_SCHEMA,
    generate_synthetic_battery_table,
    soh_ground_truth,
)

from helpers import categorical_battery_row


def test_same_seed_byte_identical():
    a = generate_synthetic_battery_table(100, 0.02, seed=7)
    b = generate_synthetic_battery_table(100, 0.02, seed=7)
    assert save_table_csv(a) == save_table_csv(b)


def test_different_seeds_differ():
    a = generate_synthetic_battery_table(100, 0.02, seed=7)
    b = generate_synthetic_battery_table(100, 0.02, seed=8)
    assert save_table_csv(a) != save_table_csv(b)


def test_zero_noise_targets_equal_ground_truth():
    table = generate_synthetic_battery_table(200, 0.0, seed=1)
    for row, target in zip(table.rows, table.targets):
        assert target == soh_ground_truth(row)


def test_targets_clamped_to_unit_interval():
    table = generate_synthetic_battery_table(10_000, 0.01, seed=2)
    assert all(0.0 <= t <= 1.0 for t in table.targets)


def test_schema_is_the_documented_battery_schema():
    table = generate_synthetic_battery_table(5, 0.0, seed=0)
    assert table.schema == BATTERY_SCHEMA
    assert BATTERY_SCHEMA.names == (
        "battery_type",
        "cycle_count",
        "avg_temperature_c",
        "avg_depth_of_discharge_pct",
        "avg_charge_rate_c",
        "calendar_age_days",
        "storage_soc_pct",
    )


def test_rejects_non_positive_n():
    with pytest.raises(ValueError):
        generate_synthetic_battery_table(0, 0.0, seed=0)


def test_rejects_negative_sigma():
    with pytest.raises(ValueError):
        generate_synthetic_battery_table(10, -0.1, seed=0)


def test_ground_truth_components():
    # hand-computed from the documented coefficients
    base_row = categorical_battery_row(
        battery_type="LFP",
        cycle_count=0.0,
        avg_temperature_c=20.0,
        avg_depth_of_discharge_pct=0.0,
        avg_charge_rate_c=0.5,
        calendar_age_days=0.0,
    )
    assert soh_ground_truth(base_row) == pytest.approx(1.0, abs=1e-12)  # 1.02 clamped

    cooler = categorical_battery_row(
        battery_type="NCA",
        cycle_count=1000.0,
        avg_temperature_c=35.0,
        avg_depth_of_discharge_pct=80.0,
        avg_charge_rate_c=2.0,
        calendar_age_days=365.0,
    )
    expected = 1.02 - 8e-5 * 1000 - 2e-3 * 10 - 1e-3 * 8 - 0.01 * 1.0 - 5e-5 * 365 - 0.03
    assert soh_ground_truth(cooler) == pytest.approx(expected, abs=1e-12)


def test_storage_soc_is_a_dummy_feature():
    low = categorical_battery_row(storage_soc_pct=0.0)
    high = categorical_battery_row(storage_soc_pct=100.0)
    assert soh_ground_truth(low) == soh_ground_truth(high)
