"""HTTP chat service: sessions, data upload, attribution, and LLM answers.

One service instance wraps one model + background set. A session is either
created for domain questions (chat immediately) or inferential questions
(upload an instance first). Uploading computes the prediction, its
attributions, the waterfall, and the cached info prompt injected into every
subsequent question; re-uploading replaces the cache and clears the chat
history so explanations of different instances never mix.

API:
  POST /api/sessions {mode}                    -> {session_id, prompt_version}
  POST /api/sessions/{id}/instance {values}    -> UploadResult JSON
  POST /api/sessions/{id}/messages {question}  -> {answer}
  GET  /api/sessions/{id}/explanation          -> WaterfallData JSON (204 before upload)
  GET  /api/sessions/{id}/history              -> {messages: [...]}
  GET  /healthz                                -> {status, model_loaded, backend_ok}
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field

from .attribution import BackgroundSet, ENUMERATION_GUARD, Explanation, exact_shap, kernel_shap
from .errors import BackendError, RowValidationError, ShapchatError
from .llm import BackendConfig, MockBackend, Transport, chat_complete
from .model import DataRow, TreeEnsemble, load_ensemble, load_table_csv
from .prompts import (
    ChatMessage,
    InfoPrompt,
    PROMPT_VERSION,
    ROLE_ASSISTANT,
    ROLE_USER,
    SystemPromptConfig,
    assemble_messages,
    build_info_prompt,
    build_system_prompt,
)
from .summaries import WaterfallData, waterfall_data

MODE_DOMAIN = "domain"
MODE_INFERENTIAL = "inferential"

DEFAULT_MAX_PROMPT_CHARS = 32_000
DEFAULT_WATERFALL_DISPLAY = 10
INFO_PROMPT_TOP_K = 20

DEFAULT_SYSTEM_PROMPT_CONFIG = SystemPromptConfig(
    domain_name="battery State of Health prediction",
    expected_question_kinds=(
        "domain-specific questions about batteries and feature attributions",
        "inferential questions about one uploaded battery's prediction",
    ),
    style_rules=(
        "answer clearly and concisely",
        "ground every claim about the prediction in the provided attribution values",
    ),
)

DEFAULT_DATA_DESCRIPTION = (
    "One battery telemetry snapshot uploaded by the user; the prediction is "
    "the battery's state of health on a 0-1 scale."
)


class ServiceError(ShapchatError):
    def __init__(self, status: int, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.status = status
        self.fields = fields or []


@dataclass
class CachedUpload:
    row: tuple
    prediction: float
    explanation: Explanation
    info_prompt: InfoPrompt
    waterfall: WaterfallData

    def to_json(self) -> dict:
        return {
            "row": list(self.row),
            "prediction": self.prediction,
            "explanation": self.explanation.to_json(),
            "info_prompt": self.info_prompt.to_json(),
            "waterfall": self.waterfall.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CachedUpload":
        return cls(
            row=tuple(doc["row"]),
            prediction=float(doc["prediction"]),
            explanation=Explanation.from_json(doc["explanation"]),
            info_prompt=InfoPrompt.from_json(doc["info_prompt"]),
            waterfall=WaterfallData.from_json(doc["waterfall"]),
        )


@dataclass
class Session:
    id: str
    mode: str
    history: list[ChatMessage] = field(default_factory=list)
    cached: CachedUpload | None = None
    created_at: float = field(default_factory=time.time)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "mode": self.mode,
            "history": [m.to_json() for m in self.history],
            "cached": self.cached.to_json() if self.cached else None,
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Session":
        return cls(
            id=doc["id"],
            mode=doc["mode"],
            history=[ChatMessage(m["role"], m["content"]) for m in doc["history"]],
            cached=CachedUpload.from_json(doc["cached"]) if doc.get("cached") else None,
            created_at=float(doc.get("created_at", 0.0)),
        )


class SessionStore:
    """In-memory session map with optional JSON snapshot persistence."""

    def __init__(self, persist_path: str | None = None):
        self._sessions: dict[str, Session] = {}
        self._ask_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        self.persist_path = persist_path
        if persist_path and os.path.exists(persist_path):
            self._load(persist_path)

    def _load(self, path: str) -> None:
        with open(path, encoding="utf-8") as handle:
            doc = json.load(handle)
        for raw in doc.get("sessions", []):
            session = Session.from_json(raw)
            self._sessions[session.id] = session

    def snapshot(self) -> None:
        if not self.persist_path:
            return
        doc = {"sessions": [s.to_json() for s in self._sessions.values()]}
        tmp = f"{self.persist_path}.tmp"
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(doc, handle, ensure_ascii=False)
        os.replace(tmp, self.persist_path)

    def create(self, mode: str) -> Session:
        session = Session(id=uuid.uuid4().hex, mode=mode)
        with self._lock:
            self._sessions[session.id] = session
            self._ask_locks[session.id] = threading.Lock()
            self.snapshot()
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise ServiceError(404, f"no session {session_id!r}")
        return session

    def ask_lock(self, session_id: str) -> threading.Lock:
        with self._lock:
            if session_id not in self._ask_locks:
                self._ask_locks[session_id] = threading.Lock()
            return self._ask_locks[session_id]

    def mutated(self) -> None:
        with self._lock:
            self.snapshot()


@dataclass
class ServiceSettings:
    model: TreeEnsemble
    background: BackgroundSet
    backend_config: BackendConfig
    transport: Transport | None = None
    system_prompt_config: SystemPromptConfig = DEFAULT_SYSTEM_PROMPT_CONFIG
    data_description: str = DEFAULT_DATA_DESCRIPTION
    explain_method: str = "kernel"
    max_prompt_chars: int = DEFAULT_MAX_PROMPT_CHARS
    waterfall_display: int = DEFAULT_WATERFALL_DISPLAY
    persist_path: str | None = None


class ChatService:
    """Transport-agnostic core; the FastAPI app is a thin layer on top."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.model = settings.model
        self.background = settings.background
        self.system_prompt = build_system_prompt(settings.system_prompt_config)
        self.transport = settings.transport
        self.store = SessionStore(settings.persist_path)

    def create_session(self, mode: str) -> Session:
        if mode not in (MODE_DOMAIN, MODE_INFERENTIAL):
            raise ServiceError(400, f"mode must be '{MODE_DOMAIN}' or '{MODE_INFERENTIAL}'")
        return self.store.create(mode)

    def _explain(self, row: DataRow) -> Explanation:
        if self.settings.explain_method == "exact":
            return exact_shap(self.model, row, self.background)
        d = len(self.model.schema)
        budget = "all" if d <= ENUMERATION_GUARD else max(2000, 20 * d)
        return kernel_shap(self.model, row, self.background, budget=budget)

    def upload_instance(self, session_id: str, values: list) -> CachedUpload:
        session = self.store.get(session_id)
        try:
            self.model.schema.validate_row(tuple(values))
        except RowValidationError as exc:
            raise ServiceError(400, str(exc), fields=exc.fields) from exc
        row = tuple(values)
        explanation = self._explain(row)
        info = build_info_prompt(
            explanation, self.model.schema, self.settings.data_description, k=INFO_PROMPT_TOP_K
        )
        cached = CachedUpload(
            row=row,
            prediction=explanation.prediction,
            explanation=explanation,
            info_prompt=info,
            waterfall=waterfall_data(explanation, max_display=self.settings.waterfall_display),
        )
        # serialize with any in-flight ask, then replace the cache and reset
        # the conversation: answers must never mix explanations of two
        # different instances
        with self.store.ask_lock(session_id):
            session.cached = cached
            session.history.clear()
            session.mode = MODE_INFERENTIAL
            self.store.mutated()
        return cached

    def ask(self, session_id: str, question: str) -> str:
        session = self.store.get(session_id)
        if not question or not question.strip():
            raise ServiceError(400, "question must be non-empty")
        lock = self.store.ask_lock(session_id)
        if not lock.acquire(blocking=False):
            raise ServiceError(409, "another question is already in flight for this session")
        try:
            if session.mode == MODE_INFERENTIAL and session.cached is None:
                raise ServiceError(400, "upload data first: inferential sessions need an instance")
            info = session.cached.info_prompt if session.cached else None
            messages = assemble_messages(self.system_prompt, info, session.history, question)
            total_chars = sum(len(m.content) for m in messages)
            if total_chars > self.settings.max_prompt_chars:
                raise ServiceError(
                    413,
                    f"assembled prompt is {total_chars} characters, over the "
                    f"{self.settings.max_prompt_chars} limit",
                )
            try:
                response = chat_complete(
                    self.settings.backend_config, messages, transport=self.transport
                )
            except BackendError as exc:
                # surface the failure; history stays untouched so the client
                # can simply retry
                raise ServiceError(502, f"backend failure: {exc}") from exc
            session.history.append(ChatMessage(ROLE_USER, question))
            session.history.append(ChatMessage(ROLE_ASSISTANT, response.content))
            self.store.mutated()
            return response.content
        finally:
            lock.release()

    def get_explanation(self, session_id: str) -> WaterfallData | None:
        session = self.store.get(session_id)
        if session.cached is None:
            return None
        return session.cached.waterfall

    def get_history(self, session_id: str) -> list[ChatMessage]:
        return list(self.store.get(session_id).history)

    def backend_ok(self) -> bool:
        if self.transport is not None:
            return self.transport.ping()
        from .llm import HttpTransport

        return HttpTransport(self.settings.backend_config).ping()


def create_app(settings: ServiceSettings):
    """Build the FastAPI application around a ChatService."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, Response

    service = ChatService(settings)
    app = FastAPI(title="shapchat service")
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        body = {"error": str(exc)}
        if exc.fields:
            body["fields"] = exc.fields
        return JSONResponse(status_code=exc.status, content=body)

    @app.post("/api/sessions")
    async def create_session(payload: dict):
        session = service.create_session(payload.get("mode", ""))
        return {"session_id": session.id, "prompt_version": PROMPT_VERSION}

    @app.post("/api/sessions/{session_id}/instance")
    async def upload_instance(session_id: str, payload: dict):
        if "values" not in payload or not isinstance(payload["values"], list):
            raise ServiceError(400, "body must be {\"values\": [...]} in schema order")
        cached = service.upload_instance(session_id, payload["values"])
        return {
            "prediction": cached.prediction,
            "explanation": cached.explanation.to_json(),
            "waterfall": cached.waterfall.to_json(),
        }

    @app.post("/api/sessions/{session_id}/messages")
    async def ask(session_id: str, payload: dict):
        answer = service.ask(session_id, payload.get("question", ""))
        return {"answer": answer}

    @app.get("/api/sessions/{session_id}/explanation")
    async def get_explanation(session_id: str):
        waterfall = service.get_explanation(session_id)
        if waterfall is None:
            return Response(status_code=204)
        return waterfall.to_json()

    @app.get("/api/sessions/{session_id}/history")
    async def get_history(session_id: str):
        return {"messages": [m.to_json() for m in service.get_history(session_id)]}

    @app.get("/healthz")
    async def healthz():
        return {
            "status": "ok",
            "model_loaded": True,
            "backend_ok": service.backend_ok(),
        }

    return app


def settings_from_config(
    config: dict,
    transport: Transport | None = None,
    mock_backend: bool = False,
) -> ServiceSettings:
    """Build settings from a config document (see README for the format).

    Required keys: model_path, background_path. Optional: backend {...},
    data_description, explain_method, max_prompt_chars, persist_path.
    Environment variables LLM_BASE_URL / LLM_MODEL override the backend
    block. mock_backend=True wires in an echoing MockBackend for demos.
    """
    with open(config["model_path"], encoding="utf-8") as handle:
        model = load_ensemble(handle.read())
    with open(config["background_path"], encoding="utf-8") as handle:
        table = load_table_csv(handle.read(), model.schema)
    background = BackgroundSet.from_table(
        table, max_rows=int(config.get("background_max_rows", 100)), seed=0
    )
    backend_block = dict(config.get("backend", {}))
    backend_block.setdefault("base_url", os.environ.get("LLM_BASE_URL", "http://127.0.0.1:8080"))
    backend_block.setdefault("model_name", os.environ.get("LLM_MODEL", "local-model"))
    backend_config = BackendConfig(**backend_block)
    if mock_backend and transport is None:
        transport = MockBackend(mode="echo_top_feature")
    return ServiceSettings(
        model=model,
        background=background,
        backend_config=backend_config,
        transport=transport,
        data_description=config.get("data_description", DEFAULT_DATA_DESCRIPTION),
        explain_method=config.get("explain_method", "kernel"),
        max_prompt_chars=int(config.get("max_prompt_chars", DEFAULT_MAX_PROMPT_CHARS)),
        persist_path=config.get("persist_path"),
    )
