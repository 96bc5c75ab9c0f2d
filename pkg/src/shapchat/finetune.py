"""Fine-tuning corpus generation: the three training stages and their
evaluation artifacts.

Stage 1 (in_domain) splits user-supplied domain documents into train/eval.
Stage 2 (global_explanation) distills batch attribution statistics into one
unstructured training document: a global ranking, per-feature correlation
notes, and per-category rankings. Stage 3 (human_alignment) builds matching
instruction/answer record sets grounded in per-row explanations.

Corpus generation never trains anything itself; the per-stage
hyperparameter configs are emitted as metadata for external LoRA tooling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attribution import (
    BackgroundSet,
    ENUMERATION_GUARD,
    Explanation,
    exact_shap,
    kernel_shap,
)
from .errors import DatasetError
from .model import CATEGORICAL, DataTable, TreeEnsemble
from .prompts import (
    AlpacaRecord,
    build_info_prompt,
    format_feature_value,
    render_alpaca,
    select_top_features,
)
from .summaries import global_summary, top_features

STEP_IN_DOMAIN = "in_domain"
STEP_GLOBAL_EXPLANATION = "global_explanation"
STEP_HUMAN_ALIGNMENT = "human_alignment"

TEMPLATE_VERSION = "1.0"

DEFAULT_QUESTION_TEMPLATES = (
    "Why is the predicted SoH {p}?",
    "Which feature influenced this prediction most?",
    "What would improve this battery's health?",
)

DEFAULT_DATA_DESCRIPTION = (
    "One battery telemetry snapshot with its model-predicted state of health "
    "and per-feature attribution values."
)


@dataclass(frozen=True)
class DomainCategory:
    name: str
    documents: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(self.documents) < 2:
            raise DatasetError(
                f"category {self.name!r} needs >= 2 documents (train + eval), "
                f"got {len(self.documents)}"
            )
        ids = [doc_id for doc_id, _ in self.documents]
        if len(set(ids)) != len(ids):
            raise DatasetError(f"category {self.name!r} has duplicate document ids")


@dataclass(frozen=True)
class CorpusSplit:
    category: str
    train_docs: tuple[tuple[str, str], ...]
    eval_doc: tuple[str, str]

    def manifest(self) -> dict:
        return {
            "category": self.category,
            "train": [doc_id for doc_id, _ in self.train_docs],
            "eval": self.eval_doc[0],
        }


@dataclass(frozen=True)
class FinetuneConfig:
    step: str
    epochs: int
    learning_rate: float
    lora_rank: int
    lora_alpha: int
    batch_size: int
    micro_batch_size: int

    def __post_init__(self):
        numbers = (
            self.epochs,
            self.learning_rate,
            self.lora_rank,
            self.lora_alpha,
            self.batch_size,
            self.micro_batch_size,
        )
        if any(v <= 0 for v in numbers):
            raise DatasetError("fine-tuning hyperparameters must all be positive")
        if self.micro_batch_size > self.batch_size:
            raise DatasetError("micro_batch_size must not exceed batch_size")

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "lora_rank": self.lora_rank,
            "lora_alpha": self.lora_alpha,
            "batch_size": self.batch_size,
            "micro_batch_size": self.micro_batch_size,
        }


_STEP_CONFIGS = {
    STEP_IN_DOMAIN: dict(epochs=3),
    STEP_GLOBAL_EXPLANATION: dict(epochs=3),
    STEP_HUMAN_ALIGNMENT: dict(epochs=20),
}


def finetune_config_for_step(step: str) -> FinetuneConfig:
    if step not in _STEP_CONFIGS:
        raise DatasetError(
            f"unknown fine-tuning step {step!r}; expected one of {sorted(_STEP_CONFIGS)}"
        )
    return FinetuneConfig(
        step=step,
        learning_rate=0.0003,
        lora_rank=8,
        lora_alpha=16,
        batch_size=128,
        micro_batch_size=4,
        **_STEP_CONFIGS[step],
    )


@dataclass(frozen=True)
class QARecord:
    """An alpaca record plus the provenance needed to re-derive it."""

    record: AlpacaRecord
    row_index: int
    seed: int
    template_id: int

    def __post_init__(self):
        if self.row_index < 0 or self.template_id < 0:
            raise DatasetError("provenance indices must be non-negative")


@dataclass(frozen=True)
class AlignmentDataset:
    train: tuple[QARecord, ...]
    eval: tuple[QARecord, ...]

    def provenance(self) -> dict:
        def entries(records):
            return [
                {"row_index": r.row_index, "template_id": r.template_id} for r in records
            ]

        seed = self.train[0].seed if self.train else (self.eval[0].seed if self.eval else 0)
        return {
            "seed": seed,
            "template_version": TEMPLATE_VERSION,
            "train": entries(self.train),
            "eval": entries(self.eval),
        }


def split_in_domain_corpus(
    category: DomainCategory, eval_doc_id: str = "auto", seed: int = 0
) -> CorpusSplit:
    """Earmark one document for evaluation; the rest train.

    eval_doc_id="auto" picks the evaluation document with a seeded draw;
    anything else must name an existing document id.
    """
    ids = [doc_id for doc_id, _ in category.documents]
    if eval_doc_id == "auto":
        rng = np.random.default_rng(seed)
        eval_index = int(rng.integers(0, len(ids)))
    else:
        if eval_doc_id not in ids:
            raise DatasetError(
                f"category {category.name!r} has no document {eval_doc_id!r}"
            )
        eval_index = ids.index(eval_doc_id)
    return CorpusSplit(
        category=category.name,
        train_docs=tuple(
            doc for i, doc in enumerate(category.documents) if i != eval_index
        ),
        eval_doc=category.documents[eval_index],
    )


def _auto_explain(
    model: TreeEnsemble, row, background: BackgroundSet, seed: int
) -> Explanation:
    d = len(model.schema)
    if d <= 10:
        return exact_shap(model, row, background)
    if d <= ENUMERATION_GUARD:
        return kernel_shap(model, row, background, budget="all")
    return kernel_shap(model, row, background, budget=max(2000, 20 * d), seed=seed)


def auto_explain_table(
    model: TreeEnsemble, table: DataTable, background: BackgroundSet, seed: int = 0
) -> list[Explanation]:
    """One explanation per row, picking the cheapest trustworthy solver for
    the model's feature count."""
    return [_auto_explain(model, row, background, seed) for row in table.rows]


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.std() == 0.0 or b.std() == 0.0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def strongest_partner(encoded: np.ndarray, shap_matrix: np.ndarray, i: int) -> tuple[int, float]:
    """The feature j != i whose values correlate most strongly (by |Pearson|)
    with feature i's SHAP values; ties break toward the lower index.
    Returns (j, |r|)."""
    candidates = [
        (abs(_pearson(encoded[:, j], shap_matrix[:, i])), -j)
        for j in range(encoded.shape[1])
        if j != i
    ]
    best_abs, neg_j = max(candidates)
    return -neg_j, best_abs


def _ranking_lines(mean_abs: Sequence[float], names: Sequence[str]) -> list[str]:
    order = sorted(range(len(mean_abs)), key=lambda i: (-mean_abs[i], i))
    return [
        f"{rank}. {names[i]}: mean |SHAP| = {mean_abs[i]:.6f}"
        for rank, i in enumerate(order, start=1)
    ]


def generate_global_explanation_doc(
    model: TreeEnsemble,
    table: DataTable,
    background: BackgroundSet,
    category_feature: str,
    dependence_top_k: int = 15,
) -> str:
    """The stage-2 training document: mechanical statistics over a batch of
    explanations, rendered deterministically.

    Section (a) ranks features by mean |SHAP|. Section (b) reports, for each
    of the top min(dependence_top_k, d) features, the Pearson correlation
    between its values and its SHAP values, plus the other feature whose
    values correlate most strongly (by |r|) with those SHAP values. Section
    (c) repeats the ranking within each category of ``category_feature``.
    """
    if len(table) == 0:
        raise DatasetError("table must be non-empty")
    schema = model.schema
    cat_index = schema.index_of(category_feature)
    if schema.features[cat_index].kind != CATEGORICAL:
        raise DatasetError(f"category feature {category_feature!r} is not categorical")

    explanations = auto_explain_table(model, table, background)
    names = schema.names
    d = len(names)
    summary = global_summary(explanations)
    encoded = schema.encode_rows(table.rows)
    shap_matrix = np.array([e.shap_values for e in explanations])

    lines: list[str] = [
        "Model explanation summary",
        f"Rows analyzed: {len(table)}",
        "",
        "(a) Global feature ranking by mean absolute SHAP value:",
    ]
    lines.extend(_ranking_lines(summary.mean_abs_shap, names))

    lines += ["", "(b) Value/SHAP correlations for the most important features:"]
    for i in top_features(summary, min(dependence_top_k, d)):
        own = _pearson(encoded[:, i], shap_matrix[:, i])
        if own > 1e-12:
            direction = "rises"
        elif own < -1e-12:
            direction = "falls"
        else:
            direction = "does not move"
        partner_line = ""
        if d > 1:
            best_j, best_abs = strongest_partner(encoded, shap_matrix, i)
            partner_line = f"; strongest partner feature: {names[best_j]} (|r| = {best_abs:.4f})"
        lines.append(
            f"- {names[i]}: its SHAP value {direction} with its own value "
            f"(r = {own:+.4f}){partner_line}"
        )

    lines += ["", f"(c) Feature ranking per {category_feature}:"]
    categories = schema.features[cat_index].categories
    for category in categories:
        group = [
            e
            for e, row in zip(explanations, table.rows)
            if row[cat_index] == category
        ]
        lines.append(f"[{category_feature} = {category}]")
        if not group:
            lines.append("(no rows)")
            continue
        lines.extend(_ranking_lines(global_summary(group).mean_abs_shap, names))
    return "\n".join(lines) + "\n"


def _answer_text(explanation: Explanation, target_name: str) -> str:
    name, value, shap = select_top_features(explanation, 1)[0]
    if shap > 0:
        effect = f"raised the prediction by {abs(shap):.4f}"
    elif shap < 0:
        effect = f"lowered the prediction by {abs(shap):.4f}"
    else:
        effect = "did not move the prediction"
    return (
        f"The model predicts {target_name} = {explanation.prediction:.4f}. "
        f"Starting from a baseline of {explanation.base_value:.4f}, the most "
        f"influential feature was {name} = {format_feature_value(value)}, which {effect}."
    )


def generate_alignment_dataset(
    model: TreeEnsemble,
    table: DataTable,
    background: BackgroundSet,
    templates: Sequence[str] = DEFAULT_QUESTION_TEMPLATES,
    k: int = 20,
    train_frac: float = 0.8,
    seed: int = 0,
    description: str = DEFAULT_DATA_DESCRIPTION,
) -> AlignmentDataset:
    """One Q&A record per table row: instruction from a cycling template,
    input = the row's info prompt, output = a mechanical answer naming the
    prediction, the top feature with its direction of effect, and the base
    value. Rows are split train/eval disjointly; both sides share the same
    templates."""
    if len(table) < 2:
        raise DatasetError("need >= 2 rows to split into train and eval")
    if not templates:
        raise DatasetError("need at least one question template")
    if not 0.0 < train_frac < 1.0:
        raise DatasetError(f"train_frac must be in (0, 1), got {train_frac}")

    records: list[QARecord] = []
    for i, row in enumerate(table.rows):
        explanation = _auto_explain(model, row, background, seed)
        info = build_info_prompt(explanation, model.schema, description, k=k)
        template_id = i % len(templates)
        instruction = templates[template_id].replace(
            "{p}", f"{explanation.prediction:.4f}"
        )
        records.append(
            QARecord(
                record=AlpacaRecord(
                    instruction=instruction,
                    input=info.rendered,
                    output=_answer_text(explanation, model.schema.target_name),
                ),
                row_index=i,
                seed=seed,
                template_id=template_id,
            )
        )

    n = len(records)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = min(max(int(round(n * train_frac)), 1), n - 1)
    train_index = set(int(i) for i in perm[:n_train])
    train = tuple(r for r in records if r.row_index in train_index)
    evaluation = tuple(r for r in records if r.row_index not in train_index)
    return AlignmentDataset(train=train, eval=evaluation)


def records_to_jsonl(records: Sequence[QARecord]) -> str:
    """UTF-8 alpaca JSONL, one record per line."""
    return "".join(render_alpaca(r.record) + "\n" for r in records)


def load_domain_category(name: str, files: Sequence[tuple[str, str]]) -> DomainCategory:
    """Build a category from (doc_id, text) pairs, e.g. read from .txt files."""
    return DomainCategory(name=name, documents=tuple(files))


def split_to_manifest_json(split: CorpusSplit) -> str:
    return json.dumps(split.manifest(), indent=2, ensure_ascii=False) + "\n"
