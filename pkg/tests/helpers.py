"""Shared test fixtures: hand-built models and brute-force oracles.

The oracles here deliberately avoid the library's solver paths: Shapley
values come from averaging marginal contributions over every permutation,
and stump fitting comes from exhaustive threshold search.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from shapchat.attribution import BackgroundSet, coalition_value
from shapchat.model import (
    CATEGORICAL,
    NUMERIC,
    Feature,
    FeatureSchema,
    Leaf,
    Split,
    TreeEnsemble,
)


def numeric_schema(d: int, target: str = "y") -> FeatureSchema:
    return FeatureSchema(
        tuple(Feature(f"x{i}", NUMERIC) for i in range(d)), target_name=target
    )


def stump(feature: int, threshold: float, left_value: float, right_value: float) -> tuple:
    return (
        Split(feature=feature, threshold=threshold, left=1, right=2),
        Leaf(left_value),
        Leaf(right_value),
    )


def stump_model(
    d: int,
    feature: int = 0,
    threshold: float = 0.5,
    left_value: float = 1.0,
    right_value: float = 3.0,
    base_score: float = 0.0,
) -> TreeEnsemble:
    return TreeEnsemble(
        schema=numeric_schema(d),
        base_score=base_score,
        trees=(stump(feature, threshold, left_value, right_value),),
    )


def random_tree(rng: np.random.Generator, d: int, max_depth: int) -> tuple:
    """A random axis-aligned tree as a flat preorder node array."""
    nodes: list = []

    def grow(depth: int) -> int:
        pos = len(nodes)
        nodes.append(None)
        if depth >= max_depth or rng.random() < 0.3:
            nodes[pos] = Leaf(float(rng.normal()))
            return pos
        feature = int(rng.integers(0, d))
        threshold = float(np.round(rng.uniform(-1.0, 1.0), 3))
        left = grow(depth + 1)
        right = grow(depth + 1)
        nodes[pos] = Split(feature=feature, threshold=threshold, left=left, right=right)
        return pos

    grow(0)
    return tuple(nodes)


def random_model(rng: np.random.Generator, d: int, n_trees: int, max_depth: int = 3) -> TreeEnsemble:
    return TreeEnsemble(
        schema=numeric_schema(d),
        base_score=float(rng.normal()),
        trees=tuple(random_tree(rng, d, max_depth) for _ in range(n_trees)),
    )


def random_rows(rng: np.random.Generator, d: int, n: int) -> list[tuple]:
    return [tuple(float(v) for v in rng.uniform(-1.5, 1.5, size=d)) for _ in range(n)]


def permutation_shap_oracle(
    model: TreeEnsemble, instance, background: BackgroundSet
) -> list[float]:
    """Shapley values by full permutation enumeration; O(d! * 2^d), d <= 6."""
    d = len(model.schema)
    values: dict[frozenset, float] = {}

    def v(coalition: frozenset) -> float:
        if coalition not in values:
            values[coalition] = coalition_value(model, instance, background, coalition)
        return values[coalition]

    phi = [0.0] * d
    for perm in itertools.permutations(range(d)):
        members: set[int] = set()
        for i in perm:
            before = v(frozenset(members))
            members.add(i)
            phi[i] += v(frozenset(members)) - before
    n = math.factorial(d)
    return [p / n for p in phi]


def best_stump_oracle(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Exhaustive single-split search on 1-D data; returns (threshold, sse).

    Thresholds are midpoints between consecutive distinct sorted values;
    each side predicts its mean.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    best_threshold, best_sse = math.nan, math.inf
    for i in range(len(xs) - 1):
        if xs[i] == xs[i + 1]:
            continue
        threshold = (xs[i] + xs[i + 1]) / 2.0
        left, right = ys[: i + 1], ys[i + 1 :]
        sse = float(((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum())
        if sse < best_sse:
            best_threshold, best_sse = threshold, sse
    return best_threshold, best_sse


def categorical_battery_row(**overrides) -> tuple:
    """A representative row over the synthetic battery schema."""
    row = {
        "battery_type": "NMC",
        "cycle_count": 800.0,
        "avg_temperature_c": 31.5,
        "avg_depth_of_discharge_pct": 64.2,
        "avg_charge_rate_c": 1.4,
        "calendar_age_days": 900.0,
        "storage_soc_pct": 55.0,
    }
    row.update(overrides)
    return (
        row["battery_type"],
        row["cycle_count"],
        row["avg_temperature_c"],
        row["avg_depth_of_discharge_pct"],
        row["avg_charge_rate_c"],
        row["calendar_age_days"],
        row["storage_soc_pct"],
    )
