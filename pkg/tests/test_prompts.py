"""Prompt templates, message assembly, and alpaca record round trips."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapchat.errors import PromptError
from shapchat.prompts import (
    AlpacaRecord,
    ChatMessage,
    InfoPrompt,
    SystemPromptConfig,
    assemble_messages,
    build_info_prompt,
    build_system_prompt,
    first_feature_name,
    format_feature_value,
    parse_alpaca,
    render_alpaca,
    select_top_features,
)
from shapchat.synth import BATTERY_SCHEMA

from test_summaries import make_explanation


class TestSystemPrompt:
    def test_contains_domain_and_sections(self):
        config = SystemPromptConfig(
            domain_name="battery State of Health",
            expected_question_kinds=("domain-specific questions", "inferential questions"),
            style_rules=("be concise",),
        )
        text = build_system_prompt(config)
        assert "battery State of Health" in text
        assert "domain-specific questions" in text
        assert "inferential questions" in text
        assert "be concise" in text

    def test_empty_style_rules_omit_the_section(self):
        config = SystemPromptConfig(domain_name="widgets")
        text = build_system_prompt(config)
        assert "Answer style" not in text
        assert "Expect questions" not in text

    def test_deterministic(self):
        config = SystemPromptConfig(domain_name="widgets", style_rules=("a", "b"))
        assert build_system_prompt(config) == build_system_prompt(config)

    def test_empty_domain_rejected(self):
        with pytest.raises(PromptError):
            SystemPromptConfig(domain_name="")


class TestSelectTopFeatures:
    def test_magnitude_ordering(self):
        explanation = make_explanation([0.5, -0.7, 0.1])
        top = select_top_features(explanation, 2)
        assert [name for name, _, _ in top] == ["x1", "x0"]

    def test_k_larger_than_d_clamps(self):
        explanation = make_explanation([0.1] * 7)
        assert len(select_top_features(explanation, 20)) == 7

    def test_tie_breaks_to_lower_index(self):
        explanation = make_explanation([0.3, 0.3])
        top = select_top_features(explanation, 1)
        assert top[0][0] == "x0"


class TestInfoPrompt:
    def test_renders_prediction_to_four_decimals(self):
        explanation = make_explanation([0.5, 0.3731], base=0.0)
        info = build_info_prompt(explanation, BATTERY_SCHEMA, "battery snapshot", k=2)
        assert f"{explanation.prediction:.4f}" in info.rendered
        assert "battery snapshot" in info.rendered
        assert f"{explanation.base_value:.4f}" in info.rendered

    def test_clamps_to_feature_count(self):
        explanation = make_explanation([0.1, -0.2, 0.05])
        info = build_info_prompt(explanation, BATTERY_SCHEMA, "desc", k=20)
        assert len(info.feature_lines) == 3
        feature_lines = [l for l in info.rendered.splitlines() if l.startswith("- ")]
        assert len(feature_lines) == 3

    def test_lines_match_select_top_features(self):
        explanation = make_explanation([0.5, -0.7, 0.1, 0.2])
        info = build_info_prompt(explanation, BATTERY_SCHEMA, "desc", k=3)
        assert list(info.feature_lines) == select_top_features(explanation, 3)

    def test_first_feature_name_reads_the_top_line(self):
        explanation = make_explanation(
            [0.5, -0.7], values=("NCA", 12.0), names=("battery_type", "cycle_count")
        )
        info = build_info_prompt(explanation, BATTERY_SCHEMA, "desc")
        assert first_feature_name(info.rendered) == "cycle_count"

    def test_format_feature_value(self):
        assert format_feature_value(12.0) == "12.0000"
        assert format_feature_value("NCA") == "NCA"

    @given(
        st.lists(
            st.floats(min_value=-10, max_value=10, allow_nan=False), min_size=1, max_size=12
        ),
        st.integers(min_value=1, max_value=25),
    )
    @settings(max_examples=60, deadline=None)
    def test_line_count_is_min_k_d(self, shap_values, k):
        explanation = make_explanation(shap_values)
        info = build_info_prompt(explanation, BATTERY_SCHEMA, "desc", k=k)
        assert len(info.feature_lines) == min(k, len(shap_values))


class TestAssembleMessages:
    def test_minimal_assembly(self):
        messages = assemble_messages("sys", None, [], "hello?")
        assert [m.role for m in messages] == ["system", "user"]
        assert messages[0].content == "sys"
        assert messages[1].content == "hello?"

    def test_full_ordering(self):
        explanation = make_explanation([0.5, -0.7])
        info = build_info_prompt(explanation, BATTERY_SCHEMA, "desc")
        history = [ChatMessage("user", "q1"), ChatMessage("assistant", "a1")]
        messages = assemble_messages("sys", info, history, "q2")
        assert [m.role for m in messages] == ["system", "system", "user", "assistant", "user"]
        assert messages[1].content == info.rendered
        assert messages[-1].content == "q2"

    def test_history_not_mutated_and_pure(self):
        history = [ChatMessage("user", "q1"), ChatMessage("assistant", "a1")]
        snapshot = list(history)
        first = assemble_messages("sys", None, history, "q2")
        second = assemble_messages("sys", None, history, "q2")
        assert history == snapshot
        assert first == second

    def test_appending_turns_is_associative(self):
        history = []
        messages_1 = assemble_messages("sys", None, history, "q1")
        history_after = history + [ChatMessage("user", "q1"), ChatMessage("assistant", "a1")]
        messages_2 = assemble_messages("sys", None, history_after, "q2")
        assert messages_2[:2] == messages_1[:1] + [ChatMessage("user", "q1")]

    def test_empty_question_rejected(self):
        with pytest.raises(PromptError):
            assemble_messages("sys", None, [], "")

    def test_invalid_role_rejected(self):
        with pytest.raises(PromptError):
            ChatMessage("tool", "hi")


class TestAlpaca:
    def test_round_trip(self):
        record = AlpacaRecord(
            instruction="Explain the prediction", input="ctx", output="because"
        )
        assert parse_alpaca(render_alpaca(record)) == record

    def test_wrong_key_named_in_error(self):
        text = json.dumps({"instruction": "i", "input": "x", "response": "r"})
        with pytest.raises(PromptError, match="output"):
            parse_alpaca(text)

    def test_extra_key_named_in_error(self):
        text = json.dumps(
            {"instruction": "i", "input": "x", "output": "o", "meta": "m"}
        )
        with pytest.raises(PromptError, match="meta"):
            parse_alpaca(text)

    def test_newlines_stay_on_one_line(self):
        record = AlpacaRecord(instruction="i", input="line1\nline2", output="o\n")
        line = render_alpaca(record)
        assert "\n" not in line
        assert parse_alpaca(line) == record

    @given(
        st.text(min_size=1).filter(lambda s: s.strip()),
        st.text(),
        st.text(),
    )
    @settings(max_examples=120, deadline=None)
    def test_round_trip_is_a_bijection(self, instruction, input_text, output):
        record = AlpacaRecord(instruction=instruction, input=input_text, output=output)
        line = render_alpaca(record)
        assert "\n" not in line
        assert parse_alpaca(line) == record

    def test_empty_instruction_rejected(self):
        with pytest.raises(PromptError):
            AlpacaRecord(instruction="", input="", output="")


def test_info_prompt_rejects_out_of_order_lines():
    with pytest.raises(PromptError):
        InfoPrompt(
            data_description="d",
            prediction=1.0,
            feature_lines=(("a", 1.0, 0.1), ("b", 2.0, -0.5)),
            rendered="r",
        )
