"""Prompt assembly: system prompt, per-instance info prompt, chat message
lists, and instruction-tuning records.

All templates are fixed and versioned (PROMPT_VERSION) so downstream tests
can pin exact text. Numbers are rendered with an explicit convention:
predictions and baselines to 4 decimals, attribution values signed to 4
decimals, numeric feature values to 4 decimals, category labels verbatim.
Nothing here truncates; callers enforce size limits and fail loudly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

from .attribution import Explanation, magnitude_order
from .errors import PromptError
from .model import FeatureSchema

PROMPT_VERSION = "1.0"

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_ASSISTANT = "assistant"
_ROLES = (ROLE_SYSTEM, ROLE_USER, ROLE_ASSISTANT)

#: One info-prompt feature line: "- name = value (SHAP +0.1234)".
FEATURE_LINE_RE = re.compile(r"^- (?P<name>.+?) = (?P<value>.+?) \(SHAP (?P<shap>[+-]\d+\.\d{4})\)$")


@dataclass(frozen=True)
class SystemPromptConfig:
    domain_name: str
    expected_question_kinds: tuple[str, ...] = ()
    style_rules: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.domain_name:
            raise PromptError("domain_name must be non-empty")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise PromptError(f"role must be one of {_ROLES}, got {self.role!r}")
        if not self.content:
            raise PromptError("message content must be non-empty")

    def to_json(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class InfoPrompt:
    """The context block injected alongside every user question."""

    data_description: str
    prediction: float
    feature_lines: tuple[tuple[str, object, float], ...]
    rendered: str

    def __post_init__(self):
        shaps = [s for _, _, s in self.feature_lines]
        if any(abs(a) < abs(b) for a, b in zip(shaps, shaps[1:])):
            raise PromptError("feature lines must be ordered by |shap| descending")

    def to_json(self) -> dict:
        return {
            "data_description": self.data_description,
            "prediction": self.prediction,
            "feature_lines": [list(line) for line in self.feature_lines],
            "rendered": self.rendered,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "InfoPrompt":
        return cls(
            data_description=doc["data_description"],
            prediction=float(doc["prediction"]),
            feature_lines=tuple(
                (name, value, float(shap)) for name, value, shap in doc["feature_lines"]
            ),
            rendered=doc["rendered"],
        )


@dataclass(frozen=True)
class AlpacaRecord:
    instruction: str
    input: str
    output: str

    def __post_init__(self):
        if not self.instruction:
            raise PromptError("instruction must be non-empty")


def build_system_prompt(config: SystemPromptConfig) -> str:
    """Deterministic system prompt; empty sections are omitted entirely."""
    parts = [
        f"You are an expert assistant for {config.domain_name}.",
        "You explain machine-learning predictions in clear, concise language, "
        "grounded in the attribution values you are given. If the conversation "
        "contains no uploaded instance, answer from domain knowledge and say so.",
    ]
    if config.expected_question_kinds:
        parts.append(
            "Expect questions of these kinds:\n"
            + "\n".join(f"- {kind}" for kind in config.expected_question_kinds)
        )
    if config.style_rules:
        parts.append(
            "Answer style:\n" + "\n".join(f"- {rule}" for rule in config.style_rules)
        )
    return "\n\n".join(parts)


def format_feature_value(value: object) -> str:
    """Numbers to 4 decimals, category labels verbatim."""
    if isinstance(value, bool):
        raise PromptError(f"boolean feature value {value!r} is not renderable")
    if isinstance(value, (int, float)):
        return f"{value:.4f}"
    return str(value)


def select_top_features(explanation: Explanation, k: int) -> list[tuple[str, object, float]]:
    """Top min(k, d) features as (name, value, shap), |shap| descending,
    ties toward the lower feature index."""
    if k < 1:
        raise PromptError(f"k must be >= 1, got {k}")
    order = magnitude_order(explanation.shap_values)[: min(k, len(explanation.shap_values))]
    return [
        (
            explanation.feature_names[i],
            explanation.feature_values[i],
            explanation.shap_values[i],
        )
        for i in order
    ]


def build_info_prompt(
    explanation: Explanation,
    schema: FeatureSchema,
    description: str,
    k: int = 20,
) -> InfoPrompt:
    """Render the prediction, baseline, and top-k attribution lines."""
    lines = select_top_features(explanation, k)
    rendered_lines = "\n".join(
        f"- {name} = {format_feature_value(value)} (SHAP {shap:+.4f})"
        for name, value, shap in lines
    )
    rendered = (
        f"Data description: {description}\n"
        f"Predicted {schema.target_name}: {explanation.prediction:.4f}\n"
        f"Baseline (expected prediction over reference data): {explanation.base_value:.4f}\n"
        f"Feature contributions, strongest first:\n{rendered_lines}"
    )
    return InfoPrompt(
        data_description=description,
        prediction=explanation.prediction,
        feature_lines=tuple(lines),
        rendered=rendered,
    )


def first_feature_name(text: str) -> str | None:
    """Name on the first info-prompt feature line found in ``text``, if any."""
    for line in text.splitlines():
        match = FEATURE_LINE_RE.match(line)
        if match:
            return match.group("name")
    return None


def assemble_messages(
    system: str,
    info: InfoPrompt | None,
    history: Sequence[ChatMessage],
    question: str,
) -> list[ChatMessage]:
    """[system] ++ [info as a system message, when present] ++ history ++ [question].

    The history sequence is never mutated; the info prompt travels as its own
    system-role message so user turns stay clean in the history.
    """
    if not question:
        raise PromptError("question must be non-empty")
    messages = [ChatMessage(ROLE_SYSTEM, system)]
    if info is not None:
        messages.append(ChatMessage(ROLE_SYSTEM, info.rendered))
    messages.extend(history)
    messages.append(ChatMessage(ROLE_USER, question))
    return messages


_ALPACA_KEYS = ("instruction", "input", "output")


def render_alpaca(record: AlpacaRecord) -> str:
    """One JSON object on one line with exactly the three alpaca keys."""
    return json.dumps(
        {"instruction": record.instruction, "input": record.input, "output": record.output},
        ensure_ascii=False,
    )


def parse_alpaca(text: str) -> AlpacaRecord:
    """Inverse of render_alpaca; rejections name the offending key."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PromptError(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise PromptError("alpaca record must be a JSON object")
    for key in _ALPACA_KEYS:
        if key not in obj:
            raise PromptError(f"alpaca record missing key {key!r}")
    extra = set(obj) - set(_ALPACA_KEYS)
    if extra:
        raise PromptError(f"alpaca record has unexpected key {sorted(extra)[0]!r}")
    for key in _ALPACA_KEYS:
        if not isinstance(obj[key], str):
            raise PromptError(f"alpaca key {key!r} must be text")
    return AlpacaRecord(instruction=obj["instruction"], input=obj["input"], output=obj["output"])
