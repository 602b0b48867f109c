"""A deterministic stand-in for a chat-completion judgment endpoint.

The same judge logic backs two surfaces: an in-process httpx transport (so
elicitation runs and tests need no sockets at all) and a small FastAPI app
served by the ``mock-server`` CLI command for poking at the wire protocol.
Replies are a pure function of the prompt, so repeated runs agree.
"""

from __future__ import annotations

import hashlib
import json
import threading

import httpx
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str
    messages: list[ChatMessage]
    temperature: float = 0.0


class ChatChoice(BaseModel):
    index: int = 0
    message: ChatMessage


class ChatResponse(BaseModel):
    model: str
    choices: list[ChatChoice]


class MockJudge:
    """Scriptable deterministic judge.

    fixed_reply pins every answer; fail_first makes each distinct prompt
    fail with HTTP 503 that many times before succeeding (exercises the
    retry path); garbage_marker makes prompts containing it return prose
    with no integer (exercises the parse-failure path).
    """

    def __init__(
        self,
        fixed_reply: str | None = None,
        fail_first: int = 0,
        garbage_marker: str | None = None,
    ):
        self.fixed_reply = fixed_reply
        self.fail_first = fail_first
        self.garbage_marker = garbage_marker
        self.requests = 0
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()

    def reply(self, prompt: str) -> str:
        if self.garbage_marker is not None and self.garbage_marker in prompt:
            return "I strongly agree with the claim."
        if self.fixed_reply is not None:
            return self.fixed_reply
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        likert = 1 + int(digest, 16) % 5
        return f"I would rate this a {likert}."

    def should_fail(self, prompt: str) -> bool:
        if self.fail_first <= 0:
            return False
        key = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        with self._lock:
            seen = self._attempts.get(key, 0)
            self._attempts[key] = seen + 1
        return seen < self.fail_first

    def handle(self, request: httpx.Request) -> httpx.Response:
        """httpx.MockTransport handler speaking the chat-completion protocol."""
        with self._lock:
            self.requests += 1
        if request.method != "POST" or not str(request.url.path).endswith("/chat/completions"):
            return httpx.Response(404, json={"error": "unknown route"})
        try:
            body = json.loads(request.content)
            prompt = body["messages"][-1]["content"]
            model = body["model"]
        except (ValueError, KeyError, IndexError):
            return httpx.Response(400, json={"error": "malformed request"})
        if self.should_fail(prompt):
            return httpx.Response(503, json={"error": "synthetic transient failure"})
        return httpx.Response(
            200,
            json={
                "model": model,
                "choices": [
                    {"index": 0, "message": {"role": "assistant", "content": self.reply(prompt)}}
                ],
            },
        )

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handle)


def create_app(judge: MockJudge | None = None) -> FastAPI:
    """FastAPI wrapper around a judge, mounted at /v1/chat/completions."""
    judge = judge or MockJudge()
    app = FastAPI(title="valuetax mock judgment endpoint")

    @app.post("/v1/chat/completions", response_model=ChatResponse)
    def chat_completions(request: ChatRequest):
        prompt = request.messages[-1].content if request.messages else ""
        if judge.should_fail(prompt):
            raise HTTPException(status_code=503, detail="synthetic transient failure")
        return ChatResponse(
            model=request.model,
            choices=[
                ChatChoice(message=ChatMessage(role="assistant", content=judge.reply(prompt)))
            ],
        )

    return app
