"""Aggregated attribution products: global rankings, dependence points, and
per-prediction waterfall decompositions.

These are the data behind the usual SHAP charts; rendering is left to
consumers (the browser UI draws the waterfall, everything else is emitted
as JSON for external tooling).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .attribution import Explanation, magnitude_order
from .errors import ExplanationError

_RECONSTRUCTION_TOL = 1e-9


@dataclass(frozen=True)
class GlobalSummary:
    """Per-feature mean |shap| plus the raw (value, shap) cloud behind it."""

    mean_abs_shap: tuple[float, ...]
    points: tuple[tuple[tuple[object, float], ...], ...]

    def __post_init__(self):
        if any(v < 0 for v in self.mean_abs_shap):
            raise ExplanationError("mean_abs_shap must be non-negative")
        counts = {len(p) for p in self.points}
        if len(counts) > 1:
            raise ExplanationError("per-feature point counts differ")

    def to_json(self) -> dict:
        return {
            "mean_abs_shap": list(self.mean_abs_shap),
            "points": [[[value, shap] for value, shap in pts] for pts in self.points],
        }


@dataclass(frozen=True)
class DependenceData:
    """(feature value, shap value, color value) per instance for one feature,
    colored by a second feature."""

    feature_index: int
    points: tuple[tuple[object, float, object], ...]

    def to_json(self) -> dict:
        return {
            "feature_index": self.feature_index,
            "points": [list(p) for p in self.points],
        }


@dataclass(frozen=True)
class WaterfallData:
    """Steps from the base value to the prediction, largest |shap| first;
    features beyond max_display are collapsed into the remainder."""

    base_value: float
    contributions: tuple[tuple[str, object, float], ...]
    remainder: float
    final_value: float

    def __post_init__(self):
        shown = sum(shap for _, _, shap in self.contributions)
        gap = abs(self.base_value + shown + self.remainder - self.final_value)
        if gap > _RECONSTRUCTION_TOL:
            raise ExplanationError(f"waterfall does not reconstruct its prediction (off by {gap:.3e})")

    def to_json(self) -> dict:
        return {
            "base_value": self.base_value,
            "contributions": [
                {"name": name, "value": value, "shap": shap}
                for name, value, shap in self.contributions
            ],
            "remainder": self.remainder,
            "final_value": self.final_value,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "WaterfallData":
        return cls(
            base_value=float(doc["base_value"]),
            contributions=tuple(
                (c["name"], c["value"], float(c["shap"])) for c in doc["contributions"]
            ),
            remainder=float(doc["remainder"]),
            final_value=float(doc["final_value"]),
        )


def global_summary(explanations: Sequence[Explanation]) -> GlobalSummary:
    """Mean |shap| per feature over a batch of explanations."""
    if not explanations:
        raise ExplanationError("global summary needs at least one explanation")
    d = len(explanations[0].shap_values)
    for e in explanations:
        if len(e.shap_values) != d:
            raise ExplanationError("explanations disagree on feature count")
    mean_abs = tuple(
        sum(abs(e.shap_values[i]) for e in explanations) / len(explanations) for i in range(d)
    )
    points = tuple(
        tuple((e.feature_values[i], e.shap_values[i]) for e in explanations) for i in range(d)
    )
    return GlobalSummary(mean_abs_shap=mean_abs, points=points)


def top_features(summary: GlobalSummary, k: int) -> list[int]:
    """Feature indices by mean |shap| descending, ties by lower index."""
    if k < 1:
        raise ExplanationError(f"k must be >= 1, got {k}")
    order = magnitude_order(summary.mean_abs_shap)
    return order[: min(k, len(order))]


def dependence_data(
    explanations: Sequence[Explanation], feature_i: int, color_feature: int
) -> DependenceData:
    """One (value, shap, color value) point per explanation for feature_i."""
    if not explanations:
        raise ExplanationError("dependence data needs at least one explanation")
    d = len(explanations[0].shap_values)
    for name, index in (("feature_i", feature_i), ("color_feature", color_feature)):
        if not 0 <= index < d:
            raise ExplanationError(f"{name}={index} out of range for d={d}")
    points = tuple(
        (e.feature_values[feature_i], e.shap_values[feature_i], e.feature_values[color_feature])
        for e in explanations
    )
    return DependenceData(feature_index=feature_i, points=points)


def waterfall_data(explanation: Explanation, max_display: int = 10) -> WaterfallData:
    """Decompose one explanation into displayable steps plus a remainder."""
    if max_display < 1:
        raise ExplanationError(f"max_display must be >= 1, got {max_display}")
    order = magnitude_order(explanation.shap_values)
    shown, collapsed = order[:max_display], order[max_display:]
    contributions = tuple(
        (
            explanation.feature_names[i],
            explanation.feature_values[i],
            explanation.shap_values[i],
        )
        for i in shown
    )
    remainder = sum(explanation.shap_values[i] for i in collapsed)
    return WaterfallData(
        base_value=explanation.base_value,
        contributions=contributions,
        remainder=remainder,
        final_value=explanation.prediction,
    )
