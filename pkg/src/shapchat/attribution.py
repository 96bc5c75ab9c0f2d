"""Shapley feature attributions for single tree-ensemble predictions.

Semantics are interventional: the value of a coalition S is the mean model
output over the background rows with the coalition's features spliced in
from the instance,

    v(S) = mean over b in background of f(x_S, b_rest)

so v(empty) is the expected prediction over the background and v(all) is the
prediction for the instance itself. Two solvers are provided:

* :func:`exact_shap` enumerates every coalition and applies the exact
  Shapley weights; it is the oracle, feasible for small feature counts.
* :func:`kernel_shap` solves the weighted least-squares formulation over
  coalition indicator vectors, either on the full enumeration or on a
  seeded sample of coalitions. The fit is anchored at v(empty) and v(all)
  by eliminating one regression variable, which enforces the additivity of
  attributions exactly rather than approximately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSystemError, ExplanationError, SchemaError
from .model import DataRow, DataTable, FeatureSchema, TreeEnsemble

EXACT_FEATURE_GUARD = 20
ENUMERATION_GUARD = 16

# local-accuracy tolerance per solver; enforced at Explanation construction
_ACCURACY_TOL = {"exact": 1e-9, "kernel": 1e-6}

# batch sizing: cap the number of spliced row elements materialized at once
_MAX_BATCH_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class BackgroundSet:
    """Reference rows defining the expectations behind every attribution."""

    schema: FeatureSchema
    rows: tuple[DataRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise SchemaError("background set must contain at least one row")
        for row in self.rows:
            self.schema.validate_row(row)

    def __len__(self) -> int:
        return len(self.rows)

    @cached_property
    def encoded(self) -> np.ndarray:
        return self.schema.encode_rows(self.rows)

    @classmethod
    def from_table(cls, table: DataTable, max_rows: int = 100, seed: int = 0) -> "BackgroundSet":
        """Deterministic subsample of a table, bounding attribution cost."""
        if len(table) <= max_rows:
            return cls(schema=table.schema, rows=table.rows)
        rng = np.random.default_rng(seed)
        picked = np.sort(rng.choice(len(table), size=max_rows, replace=False))
        return cls(schema=table.schema, rows=tuple(table.rows[i] for i in picked))


@dataclass(frozen=True)
class Explanation:
    """Attributions for one prediction: prediction = base_value + sum(shap_values)."""

    base_value: float
    shap_values: tuple[float, ...]
    feature_values: tuple
    prediction: float
    method: str
    feature_names: tuple[str, ...]
    n_samples: int | None = None

    def __post_init__(self):
        if self.method not in _ACCURACY_TOL:
            raise ExplanationError(f"unknown method {self.method!r}")
        if self.method == "kernel" and self.n_samples is None:
            raise ExplanationError("kernel explanations must record n_samples")
        if not (len(self.shap_values) == len(self.feature_values) == len(self.feature_names)):
            raise ExplanationError("shap_values, feature_values, feature_names arity mismatch")
        gap = abs(self.base_value + sum(self.shap_values) - self.prediction)
        if gap > _ACCURACY_TOL[self.method]:
            raise ExplanationError(
                f"local accuracy violated: base + sum(shap) misses prediction by {gap:.3e}"
            )

    def to_json(self) -> dict:
        doc: dict = {
            "base_value": self.base_value,
            "shap_values": list(self.shap_values),
            "feature_values": list(self.feature_values),
            "prediction": self.prediction,
            "method": self.method,
            "feature_names": list(self.feature_names),
        }
        if self.n_samples is not None:
            doc["n_samples"] = self.n_samples
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Explanation":
        try:
            return cls(
                base_value=float(doc["base_value"]),
                shap_values=tuple(float(v) for v in doc["shap_values"]),
                feature_values=tuple(doc["feature_values"]),
                prediction=float(doc["prediction"]),
                method=str(doc["method"]),
                feature_names=tuple(str(n) for n in doc["feature_names"]),
                n_samples=int(doc["n_samples"]) if "n_samples" in doc else None,
            )
        except KeyError as exc:
            raise ExplanationError(f"explanation document missing field {exc}") from exc

    def to_json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"


def magnitude_order(shap_values: Sequence[float]) -> list[int]:
    """Feature indices by |shap| descending, ties toward the lower index.

    This is the single tie-break rule used everywhere attributions are
    ranked (waterfalls, top-k prompts, summaries)."""
    return sorted(range(len(shap_values)), key=lambda i: (-abs(shap_values[i]), i))


def shapley_kernel_weight(d: int, s: int) -> float:
    """Kernel weight for a coalition of size s among d features:
    (d - 1) / (C(d, s) * s * (d - s)). Infinite at s in {0, d}, which the
    solver handles through constraints instead."""
    if d < 2:
        raise ExplanationError(f"kernel weight needs d >= 2, got {d}")
    if s in (0, d):
        raise ExplanationError(
            f"coalition size {s} of {d} has infinite weight; it is handled "
            "by the solver's anchoring constraints"
        )
    if not 0 < s < d:
        raise ExplanationError(f"coalition size {s} out of range for d={d}")
    return (d - 1) / (math.comb(d, s) * s * (d - s))


def _check_inputs(model: TreeEnsemble, instance: DataRow, background: BackgroundSet) -> np.ndarray:
    if background.schema != model.schema:
        raise ExplanationError("background schema does not match the model schema")
    return model.schema.encode_row(instance)


def _coalition_values(
    model: TreeEnsemble, enc_x: np.ndarray, bg: np.ndarray, masks: np.ndarray
) -> np.ndarray:
    """v(S) for every coalition bitmask in ``masks``, batched and chunked."""
    d = enc_x.shape[0]
    m = bg.shape[0]
    values = np.empty(len(masks), dtype=np.float64)
    per_chunk = max(1, _MAX_BATCH_ELEMENTS // (m * d))
    shifts = np.arange(d, dtype=np.int64)
    for start in range(0, len(masks), per_chunk):
        chunk = masks[start : start + per_chunk]
        take_instance = ((chunk[:, None] >> shifts[None, :]) & 1).astype(bool)
        spliced = np.where(take_instance[:, None, :], enc_x[None, None, :], bg[None, :, :])
        preds = model.predict_encoded(spliced.reshape(-1, d))
        values[start : start + len(chunk)] = preds.reshape(len(chunk), m).mean(axis=1)
    return values


def coalition_value(
    model: TreeEnsemble,
    instance: DataRow,
    background: BackgroundSet,
    coalition: Iterable[int],
) -> float:
    """Interventional value of one coalition of feature indices."""
    enc_x = _check_inputs(model, instance, background)
    d = len(enc_x)
    coalition = set(coalition)
    out_of_range = [i for i in coalition if not 0 <= i < d]
    if out_of_range:
        raise ExplanationError(f"coalition indices {sorted(out_of_range)} out of range for d={d}")
    mask = 0
    for i in coalition:
        mask |= 1 << i
    return float(_coalition_values(model, enc_x, background.encoded, np.array([mask]))[0])


def _popcounts(masks: np.ndarray, d: int) -> np.ndarray:
    sizes = np.zeros(len(masks), dtype=np.int64)
    for b in range(d):
        sizes += (masks >> b) & 1
    return sizes


def exact_shap(
    model: TreeEnsemble,
    instance: DataRow,
    background: BackgroundSet,
    max_features: int = EXACT_FEATURE_GUARD,
) -> Explanation:
    """Exact Shapley values by full coalition enumeration.

    phi_i = sum over S not containing i of
            |S|! (d - |S| - 1)! / d! * (v(S + i) - v(S))
    """
    enc_x = _check_inputs(model, instance, background)
    d = len(enc_x)
    if d > max_features:
        raise ExplanationError(
            f"exact enumeration guarded at {max_features} features (model has {d}); "
            "use kernel_shap for larger models"
        )
    masks = np.arange(1 << d, dtype=np.int64)
    v = _coalition_values(model, enc_x, background.encoded, masks)
    sizes = _popcounts(masks, d)
    # w[s] = s! (d-s-1)! / d! = 1 / (d * C(d-1, s)), computed exactly
    weights = np.array([1.0 / (d * math.comb(d - 1, s)) for s in range(d)])

    shap_values = []
    for i in range(d):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        deltas = v[without | bit] - v[without]
        shap_values.append(float(np.sum(weights[sizes[without]] * deltas)))

    return Explanation(
        base_value=float(v[0]),
        shap_values=tuple(shap_values),
        feature_values=tuple(instance),
        prediction=float(v[(1 << d) - 1]),
        method="exact",
        feature_names=model.schema.names,
    )


def _sample_coalitions(rng: np.random.Generator, d: int, budget: int) -> dict[int, int]:
    """Draw coalition bitmasks by the kernel-weight distribution over sizes;
    returns mask -> draw count (the WLS weights for sampled mode)."""
    sizes = np.arange(1, d)
    size_probs = (d - 1) / (sizes * (d - sizes))
    size_probs = size_probs / size_probs.sum()
    counts: dict[int, int] = {}
    drawn_sizes = rng.choice(sizes, size=budget, p=size_probs)
    for s in drawn_sizes:
        members = rng.choice(d, size=int(s), replace=False)
        mask = 0
        for i in members:
            mask |= 1 << int(i)
        counts[mask] = counts.get(mask, 0) + 1
    return counts


def kernel_shap(
    model: TreeEnsemble,
    instance: DataRow,
    background: BackgroundSet,
    budget: int | str = "all",
    seed: int = 0,
) -> Explanation:
    """Shapley values via constrained weighted least squares.

    budget="all" enumerates every non-trivial coalition (guarded at
    2**ENUMERATION_GUARD); an integer budget samples that many coalitions,
    deterministically per seed. The regression is anchored at v(empty) and
    v(all), so base + sum(shap) equals the prediction exactly no matter how
    few coalitions were sampled; a rank-deficient sampled system raises
    DegenerateSystemError rather than silently pseudo-inverting.
    """
    enc_x = _check_inputs(model, instance, background)
    d = len(enc_x)
    bg = background.encoded

    anchors = _coalition_values(model, enc_x, bg, np.array([0, (1 << d) - 1]))
    base, full = float(anchors[0]), float(anchors[1])

    if d == 1:
        return Explanation(
            base_value=base,
            shap_values=(full - base,),
            feature_values=tuple(instance),
            prediction=full,
            method="kernel",
            feature_names=model.schema.names,
            n_samples=0,
        )

    if budget == "all":
        if d > ENUMERATION_GUARD:
            raise ExplanationError(
                f"full coalition enumeration guarded at {ENUMERATION_GUARD} features "
                f"(model has {d}); pass an integer budget"
            )
        masks = np.arange(1, (1 << d) - 1, dtype=np.int64)
        weights = np.array([shapley_kernel_weight(d, int(s)) for s in _popcounts(masks, d)])
    elif isinstance(budget, int) and not isinstance(budget, bool):
        if budget < d:
            raise ExplanationError(f"budget {budget} < {d} features: system under-determined")
        counted = _sample_coalitions(np.random.default_rng(seed), d, budget)
        masks = np.array(sorted(counted), dtype=np.int64)
        weights = np.array([counted[int(mk)] for mk in masks], dtype=np.float64)
    else:
        raise ExplanationError(f"budget must be 'all' or an integer, got {budget!r}")

    v = _coalition_values(model, enc_x, bg, masks)
    z = ((masks[:, None] >> np.arange(d)[None, :]) & 1).astype(np.float64)

    # eliminate the last feature using sum(phi) = full - base
    y = v - base - z[:, -1] * (full - base)
    design = z[:, :-1] - z[:, -1:]
    sqrt_w = np.sqrt(weights)
    solution, _, rank, _ = np.linalg.lstsq(
        design * sqrt_w[:, None], y * sqrt_w, rcond=None
    )
    if rank < d - 1:
        raise DegenerateSystemError(
            f"sampled coalition system has rank {rank} < {d - 1}; "
            "increase the budget or use budget='all'"
        )
    head = [float(p) for p in solution]
    last = (full - base) - float(np.sum(solution))
    return Explanation(
        base_value=base,
        shap_values=tuple(head + [last]),
        feature_values=tuple(instance),
        prediction=full,
        method="kernel",
        feature_names=model.schema.names,
        n_samples=len(masks),
    )


def explain_table(
    model: TreeEnsemble,
    table: DataTable,
    background: BackgroundSet,
    method: str = "exact",
    budget: int | str = "all",
    seed: int = 0,
) -> list[Explanation]:
    """One Explanation per table row, in row order. Per-row failures are
    re-raised with the row index attached."""
    if method not in ("exact", "kernel"):
        raise ExplanationError(f"unknown method {method!r}")
    out: list[Explanation] = []
    for i, row in enumerate(table.rows):
        try:
            if method == "exact":
                out.append(exact_shap(model, row, background))
            else:
                out.append(kernel_shap(model, row, background, budget=budget, seed=seed))
        except ExplanationError as exc:
            raise ExplanationError(f"row {i}: {exc}") from exc
    return out
