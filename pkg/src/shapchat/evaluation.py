"""Perplexity, Q&A loss, improvement percentages, and the ablation report.

Everything here is backend-relative arithmetic over token log-likelihoods:
log-probs are natural-log values supplied by whatever scoring backend is in
use, and tokenization is the backend's. Perplexity is exp of the mean
negative log-likelihood per token; Q&A loss masks prompt tokens and averages
the per-record mean negative log-likelihood of the answer tokens.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import EvaluationError
from .finetune import QARecord


@dataclass(frozen=True)
class TokenScore:
    token_text: str
    logprob: float

    def __post_init__(self):
        if self.logprob > 0:
            # some backends return smoothed or renormalized values; keep them
            # but make the anomaly visible
            warnings.warn(
                f"token {self.token_text!r} has positive logprob {self.logprob}",
                stacklevel=2,
            )

    def to_json(self) -> dict:
        return {"token_text": self.token_text, "logprob": self.logprob}

    @classmethod
    def from_json(cls, doc: dict) -> "TokenScore":
        return cls(token_text=str(doc["token_text"]), logprob=float(doc["logprob"]))


@dataclass(frozen=True)
class EvalReport:
    metric: str
    value: float
    n_tokens: int
    document_id: str

    def __post_init__(self):
        if self.value <= 0:
            raise EvaluationError(f"{self.metric} must be positive, got {self.value}")
        if self.n_tokens < 1:
            raise EvaluationError("n_tokens must be >= 1")

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "n_tokens": self.n_tokens,
            "document_id": self.document_id,
        }


def perplexity(scores: Sequence[TokenScore]) -> float:
    """exp(-mean logprob); 1.0 for certain predictions, vocab size for
    uniform ones."""
    if not scores:
        raise EvaluationError("perplexity needs at least one token score")
    logprobs = [s.logprob for s in scores]
    if not all(math.isfinite(lp) for lp in logprobs):
        raise EvaluationError("token logprobs must be finite")
    return math.exp(-sum(logprobs) / len(logprobs))


def qa_prompt(record: QARecord) -> str:
    """The scoring prompt for one Q&A record; the target is the output."""
    return f"{record.record.instruction}\n\n{record.record.input}\n\n"


Scorer = Callable[[str, str], Sequence[TokenScore]]


def qa_loss(records: Sequence[QARecord], scorer: Scorer) -> float:
    """Mean over records of the mean negative log-likelihood per answer
    token. Prompt tokens are excluded by construction: the scorer receives
    (prompt, target) and must score only the target."""
    if not records:
        raise EvaluationError("qa_loss needs at least one record")
    losses = []
    for i, record in enumerate(records):
        try:
            scores = scorer(qa_prompt(record), record.record.output)
        except Exception as exc:
            raise EvaluationError(
                f"scorer failed on record {i} (source row {record.row_index}): {exc}"
            ) from exc
        if not scores:
            raise EvaluationError(
                f"scorer returned no tokens for record {i} (source row {record.row_index})"
            )
        logprobs = [s.logprob for s in scores]
        if not all(math.isfinite(lp) for lp in logprobs):
            raise EvaluationError(
                f"non-finite logprob on record {i} (source row {record.row_index})"
            )
        losses.append(-sum(logprobs) / len(logprobs))
    return sum(losses) / len(losses)


def improvement_pct(previous: float, current: float) -> float:
    """(previous - current) / previous * 100; positive when the metric
    improved (decreased)."""
    if previous <= 0:
        raise EvaluationError(f"previous value must be positive, got {previous}")
    return (previous - current) / previous * 100.0


@dataclass(frozen=True)
class AblationStage:
    """One table row: a model stage, its metric values, and which columns
    are this stage's own evaluation documents (only those get improvement
    annotations)."""

    name: str
    values: dict[str, float]
    highlight: tuple[str, ...] = ()

    @classmethod
    def from_json(cls, doc: dict) -> "AblationStage":
        return cls(
            name=str(doc["name"]),
            values={str(k): float(v) for k, v in doc["values"].items()},
            highlight=tuple(doc.get("highlight", ())),
        )


@dataclass(frozen=True)
class AblationRow:
    stage: str
    values: dict[str, float]
    improvement_pct: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class AblationReport:
    columns: tuple[str, ...]
    rows: tuple[AblationRow, ...]

    def to_json(self) -> dict:
        return {
            "columns": list(self.columns),
            "rows": [
                {
                    "stage": row.stage,
                    "values": dict(row.values),
                    "improvement_pct": dict(row.improvement_pct),
                }
                for row in self.rows
            ],
        }

    def to_json_text(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"


def build_ablation_report(stages: Sequence[AblationStage]) -> AblationReport:
    """Each stage's highlighted columns get improvement_pct versus the
    immediately preceding stage; worse values yield negative percentages
    rather than being suppressed."""
    if not stages:
        raise EvaluationError("need at least one stage")
    columns = tuple(stages[0].values)
    for stage in stages:
        if set(stage.values) != set(columns):
            raise EvaluationError(
                f"stage {stage.name!r} has columns {sorted(stage.values)}, "
                f"expected {sorted(columns)}"
            )
        unknown = set(stage.highlight) - set(columns)
        if unknown:
            raise EvaluationError(
                f"stage {stage.name!r} highlights unknown column {sorted(unknown)[0]!r}"
            )
    rows = []
    for i, stage in enumerate(stages):
        improvements = {}
        if i > 0:
            for column in stage.highlight:
                improvements[column] = improvement_pct(
                    stages[i - 1].values[column], stage.values[column]
                )
        rows.append(
            AblationRow(
                stage=stage.name, values=dict(stage.values), improvement_pct=improvements
            )
        )
    return AblationReport(columns=columns, rows=tuple(rows))


def render_ablation_text(report: AblationReport) -> str:
    """Aligned plain-text table: one row per stage, improvement percentages
    in parentheses next to the column they annotate."""
    header = ["Stage"] + list(report.columns)
    body: list[list[str]] = []
    for row in report.rows:
        cells = [row.stage]
        for column in report.columns:
            cell = f"{row.values[column]:.2f}"
            if column in row.improvement_pct:
                cell += f" ({row.improvement_pct[column]:.1f}%)"
            cells.append(cell)
        body.append(cells)
    widths = [
        max(len(line[i]) for line in [header] + body) for i in range(len(header))
    ]
    lines = []
    for line in [header] + body:
        lines.append(
            "  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip()
        )
    return "\n".join(lines) + "\n"
