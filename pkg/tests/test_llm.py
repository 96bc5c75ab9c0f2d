"""Backend client: retry discipline, parsing, and the scripted mock."""

import math

import pytest

import shapchat.llm as llm
from shapchat.errors import (
    BackendError,
    BackendUnreachableError,
    CapabilityError,
    PromptError,
    ProtocolError,
)
from shapchat.evaluation import perplexity
from shapchat.llm import (
    BackendConfig,
    CHAT_PATH,
    MockBackend,
    chat_complete,
    score_tokens,
)
from shapchat.prompts import ChatMessage, build_info_prompt

from test_summaries import make_explanation
from shapchat.synth import BATTERY_SCHEMA


@pytest.fixture(autouse=True)
def no_backoff(monkeypatch):
    monkeypatch.setattr(llm, "_BACKOFF_INITIAL_SECONDS", 0.0)


CONFIG = BackendConfig(base_url="http://test", model_name="test-model", retries=2)


def system_and_question(question="hi?"):
    return [ChatMessage("system", "sys"), ChatMessage("user", question)]


class TestBackendConfig:
    def test_invariants(self):
        with pytest.raises(BackendError):
            BackendConfig(base_url="")
        with pytest.raises(BackendError):
            BackendConfig(base_url="http://x", timeout_ms=0)
        with pytest.raises(BackendError):
            BackendConfig(base_url="http://x", temperature=-1.0)

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("LLM_BASE_URL", "http://envhost:9999")
        monkeypatch.setenv("LLM_MODEL", "env-model")
        config = BackendConfig.from_env()
        assert config.base_url == "http://envhost:9999"
        assert config.model_name == "env-model"


class TestChatComplete:
    def test_fixed_reply(self):
        mock = MockBackend(mode="fixed_reply", reply="OK")
        response = chat_complete(CONFIG, system_and_question(), transport=mock)
        assert response.content == "OK"
        assert response.finish_reason == "stop"

    def test_scripted_reply_sequence(self):
        mock = MockBackend(mode="fixed_reply", reply=["first", "second"])
        first = chat_complete(CONFIG, system_and_question(), transport=mock)
        second = chat_complete(CONFIG, system_and_question(), transport=mock)
        third = chat_complete(CONFIG, system_and_question(), transport=mock)
        assert (first.content, second.content, third.content) == ("first", "second", "second")

    def test_fail_after_zero_makes_exactly_three_attempts(self):
        mock = MockBackend(mode="fail_after_n", fail_after=0)
        with pytest.raises(BackendUnreachableError):
            chat_complete(CONFIG, system_and_question(), transport=mock)
        assert mock.attempts == 3  # retries=2 -> 1 try + 2 retries

    def test_empty_message_list_rejected_without_network(self):
        mock = MockBackend()
        with pytest.raises(PromptError):
            chat_complete(CONFIG, [], transport=mock)
        assert mock.attempts == 0

    def test_first_message_must_be_system(self):
        mock = MockBackend()
        with pytest.raises(PromptError):
            chat_complete(CONFIG, [ChatMessage("user", "hi")], transport=mock)
        assert mock.attempts == 0

    def test_messages_sent_verbatim(self):
        mock = MockBackend()
        messages = [
            ChatMessage("system", "sys"),
            ChatMessage("system", "info block"),
            ChatMessage("user", "q1"),
            ChatMessage("assistant", "a1"),
            ChatMessage("user", "q2"),
        ]
        chat_complete(CONFIG, messages, transport=mock)
        path, payload = mock.requests[-1]
        assert path == CHAT_PATH
        assert payload["messages"] == [m.to_json() for m in messages]
        assert payload["model"] == "test-model"

    def test_no_retry_on_client_error(self):
        class Rejecting:
            calls = 0

            def request(self, path, payload):
                self.calls += 1
                raise llm._HttpStatusError(400, "bad request")

            def ping(self):
                return True

        transport = Rejecting()
        with pytest.raises(BackendError):
            chat_complete(CONFIG, system_and_question(), transport=transport)
        assert transport.calls == 1

    def test_malformed_body_is_a_protocol_error(self):
        class Junk:
            def request(self, path, payload):
                return {"unexpected": True}

            def ping(self):
                return True

        with pytest.raises(ProtocolError, match="unexpected"):
            chat_complete(CONFIG, system_and_question(), transport=Junk())

    def test_echo_top_feature_reads_latest_info_prompt(self):
        explanation = make_explanation(
            [0.02, -0.31], values=(3.0, 900.0), names=("storage_soc_pct", "cycle_count")
        )
        info = build_info_prompt(explanation, BATTERY_SCHEMA, "snapshot")
        mock = MockBackend(mode="echo_top_feature")
        messages = [
            ChatMessage("system", "sys"),
            ChatMessage("system", info.rendered),
            ChatMessage("user", "what matters most?"),
        ]
        response = chat_complete(CONFIG, messages, transport=mock)
        assert "cycle_count" in response.content

    def test_echo_without_info_prompt_says_so(self):
        mock = MockBackend(mode="echo_top_feature")
        response = chat_complete(CONFIG, system_and_question(), transport=mock)
        assert "uploaded" in response.content


class TestScoreTokens:
    def test_character_tokens_at_constant_logprob(self):
        mock = MockBackend(token_logprob=-0.5)
        result = score_tokens(CONFIG, "prompt: ", "abcd", transport=mock)
        assert len(result) == 4
        assert all(s.logprob == -0.5 for s in result)
        assert "".join(s.token_text for s in result) == "abcd"

    def test_prompt_tokens_are_excluded(self):
        mock = MockBackend(token_logprob=-1.0)
        result = score_tokens(CONFIG, "0123456789", "xy", transport=mock)
        assert [s.token_text for s in result] == ["x", "y"]

    def test_empty_target_rejected(self):
        with pytest.raises(PromptError):
            score_tokens(CONFIG, "p", "", transport=MockBackend())

    def test_uniform_vocab_perplexity_recovers_vocab_size(self):
        vocab = 10
        mock = MockBackend(token_logprob=math.log(1 / vocab))
        result = score_tokens(CONFIG, "", "twelve chars", transport=mock)
        assert perplexity(result) == pytest.approx(vocab, abs=1e-9)

    def test_missing_logprob_endpoint_is_a_capability_error(self):
        class NoScoring:
            def request(self, path, payload):
                raise llm._HttpStatusError(404, "not found")

            def ping(self):
                return True

        with pytest.raises(CapabilityError, match="scoring-capable"):
            score_tokens(CONFIG, "p", "t", transport=NoScoring())

    def test_response_without_logprobs_is_a_capability_error(self):
        class NoLogprobs:
            def request(self, path, payload):
                return {"choices": [{"text": "pt"}]}

            def ping(self):
                return True

        with pytest.raises(CapabilityError):
            score_tokens(CONFIG, "p", "t", transport=NoLogprobs())
