"""Least-squares gradient boosting over axis-aligned decision trees.

Greedy variance-reduction split search; squared-error residual fitting; the
learning rate is folded into leaf values so the saved model stays a plain
additive ensemble. Categorical features are handled by ordering categories
by their mean residual inside each node and scanning that ordering like a
numeric axis; the chosen split is stored as an explicit category set.

Everything is deterministic: ties in the split search are broken toward the
lowest feature index, then the lowest threshold / shortest category prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TrainingError
from .model import CATEGORICAL, DataTable, Leaf, Split, TreeEnsemble

# Gains below this are treated as no improvement; mathematically a split's
# gain is >= 0, so this only filters float noise on constant residuals.
_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class TrainParams:
    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0:
            raise TrainingError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise TrainingError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise TrainingError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise TrainingError("min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class _BestSplit:
    gain: float
    feature: int
    threshold: float | None
    categories: frozenset[str] | None
    left_mask: np.ndarray


def _scan_prefix_gains(sums: np.ndarray, counts: np.ndarray, min_leaf: int) -> tuple[int, float]:
    """Best prefix cut of an ordered partition; returns (cut_len, gain).

    ``sums``/``counts`` hold residual sum and size per ordered group. Gain is
    the decrease in SSE versus keeping the node whole; cut_len = -1 when no
    cut satisfies the leaf-size floor.
    """
    total_sum = sums.sum()
    total_count = counts.sum()
    prefix_sum = np.cumsum(sums)[:-1]
    prefix_count = np.cumsum(counts)[:-1]
    suffix_count = total_count - prefix_count
    valid = (prefix_count >= min_leaf) & (suffix_count >= min_leaf)
    if not valid.any():
        return -1, 0.0
    gains = np.full(prefix_sum.shape, -np.inf)
    gains[valid] = (
        prefix_sum[valid] ** 2 / prefix_count[valid]
        + (total_sum - prefix_sum[valid]) ** 2 / suffix_count[valid]
        - total_sum**2 / total_count
    )
    best = int(np.argmax(gains))  # argmax takes the first max: lowest cut wins ties
    return best, float(gains[best])


class _TreeBuilder:
    def __init__(self, X: np.ndarray, schema, params: TrainParams):
        self.X = X
        self.schema = schema
        self.params = params

    def _best_split(self, idx: np.ndarray, residuals: np.ndarray) -> _BestSplit | None:
        best: _BestSplit | None = None
        r = residuals[idx]
        for j, feature in enumerate(self.schema.features):
            values = self.X[idx, j]
            if feature.kind == CATEGORICAL:
                candidate = self._categorical_split(j, feature, values, r)
            else:
                candidate = self._numeric_split(j, values, r)
            if candidate is not None and (best is None or candidate.gain > best.gain):
                best = candidate
        return best

    def _numeric_split(self, j: int, values: np.ndarray, r: np.ndarray) -> _BestSplit | None:
        order = np.argsort(values, kind="stable")
        sv = values[order]
        distinct = np.nonzero(sv[:-1] < sv[1:])[0]
        if distinct.size == 0:
            return None
        # collapse runs of equal values into groups so every cut is realizable
        bounds = np.concatenate(([0], distinct + 1, [len(sv)]))
        group_counts = np.diff(bounds)
        sums = np.add.reduceat(r[order], bounds[:-1])
        cut, gain = _scan_prefix_gains(sums, group_counts, self.params.min_samples_leaf)
        if cut < 0 or gain <= _MIN_GAIN:
            return None
        left_max = sv[bounds[cut + 1] - 1]
        right_min = sv[bounds[cut + 1]]
        threshold = (left_max + right_min) / 2.0
        return _BestSplit(
            gain=gain,
            feature=j,
            threshold=float(threshold),
            categories=None,
            left_mask=values <= threshold,
        )

    def _categorical_split(
        self, j: int, feature, values: np.ndarray, r: np.ndarray
    ) -> _BestSplit | None:
        codes = values.astype(np.int64)
        n_cats = len(feature.categories)
        counts = np.bincount(codes, minlength=n_cats).astype(np.float64)
        sums = np.bincount(codes, weights=r, minlength=n_cats)
        present = np.nonzero(counts > 0)[0]
        if present.size < 2:
            return None
        means = sums[present] / counts[present]
        # order present categories by mean residual, ties by code, and treat
        # the ordered sequence like a numeric axis
        order = present[np.lexsort((present, means))]
        cut, gain = _scan_prefix_gains(
            sums[order], counts[order], self.params.min_samples_leaf
        )
        if cut < 0 or gain <= _MIN_GAIN:
            return None
        left_codes = order[: cut + 1]
        categories = frozenset(feature.categories[c] for c in left_codes)
        return _BestSplit(
            gain=gain,
            feature=j,
            threshold=None,
            categories=categories,
            left_mask=np.isin(codes, left_codes),
        )

    def build(self, residuals: np.ndarray, tree_pred: np.ndarray) -> tuple:
        """Fit one tree to the residuals; leaf values land in tree_pred."""
        nodes: list = []

        def grow(idx: np.ndarray, depth: int) -> int:
            pos = len(nodes)
            nodes.append(None)
            best = None
            if depth < self.params.max_depth and idx.size >= 2 * self.params.min_samples_leaf:
                best = self._best_split(idx, residuals)
            if best is None:
                value = self.params.learning_rate * float(np.mean(residuals[idx]))
                nodes[pos] = Leaf(value)
                tree_pred[idx] = value
                return pos
            left = grow(idx[best.left_mask], depth + 1)
            right = grow(idx[~best.left_mask], depth + 1)
            nodes[pos] = Split(
                feature=best.feature,
                threshold=best.threshold,
                categories=best.categories,
                left=left,
                right=right,
            )
            return pos

        grow(np.arange(self.X.shape[0]), 0)
        return tuple(nodes)


def train_gbdt(table: DataTable, params: TrainParams) -> TreeEnsemble:
    """Boost squared error on the table; base_score is the target mean.

    Deterministic given (table, params): identical inputs produce identical
    model documents. Training RMSE is non-increasing over boosting rounds.
    """
    if len(table) == 0:
        raise TrainingError("cannot train on an empty table")
    if table.targets is None:
        raise TrainingError("table has no targets")
    y = np.asarray(table.targets, dtype=np.float64)
    if not np.isfinite(y).all():
        raise TrainingError("targets contain non-finite values")
    if len(table) < 2 * params.min_samples_leaf:
        raise TrainingError(
            f"need >= {2 * params.min_samples_leaf} rows for min_samples_leaf="
            f"{params.min_samples_leaf}, got {len(table)}"
        )

    X = table.schema.encode_rows(table.rows)
    base_score = float(np.mean(y))
    prediction = np.full(len(y), base_score)
    builder = _TreeBuilder(X, table.schema, params)

    trees = []
    for _ in range(params.n_trees):
        residuals = y - prediction
        tree_pred = np.zeros(len(y))
        trees.append(builder.build(residuals, tree_pred))
        prediction += tree_pred

    rmse = math.sqrt(float(np.mean((y - prediction) ** 2)))
    metadata = {
        "trained_by": "shapchat.boosting.train_gbdt",
        "n_trees": str(params.n_trees),
        "max_depth": str(params.max_depth),
        "learning_rate": repr(params.learning_rate),
        "min_samples_leaf": str(params.min_samples_leaf),
        "seed": str(params.seed),
        "train_rmse": repr(rmse),
        "n_rows": str(len(y)),
    }
    return TreeEnsemble(
        schema=table.schema, base_score=base_score, trees=tuple(trees), metadata=metadata
    )


def training_rmse_curve(table: DataTable, model: TreeEnsemble) -> list[float]:
    """RMSE on the table after each boosting round (round 0 = base only)."""
    if table.targets is None:
        raise TrainingError("table has no targets")
    y = np.asarray(table.targets, dtype=np.float64)
    X = table.schema.encode_rows(table.rows)
    prediction = np.full(len(y), model.base_score)
    curve = [math.sqrt(float(np.mean((y - prediction) ** 2)))]
    for nodes in model.trees:
        partial = TreeEnsemble(schema=model.schema, base_score=0.0, trees=(nodes,))
        prediction += partial.predict_encoded(X)
        curve.append(math.sqrt(float(np.mean((y - prediction) ** 2))))
    return curve
