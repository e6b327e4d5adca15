"""Serve a checkpoint over the chat-completion wire format so generation
clients work against it unchanged.

Endpoints: POST /v1/chat/completions (prompt in, beam-decoded completion out)
and GET /health (model name). Concurrency is bounded by a semaphore.
"""
from __future__ import annotations

import threading
from pathlib import Path

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .training import load_checkpoint


class ChatMessage(BaseModel):
    role: str
    content: str


class ChatRequest(BaseModel):
    model: str = ""
    messages: list[ChatMessage]
    temperature: float = 0.0
    max_tokens: int = 160
    stop: list[str] | None = None


def build_app(checkpoint_dir: str | Path, max_concurrency: int = 4) -> FastAPI:
    model, vocab, spec = load_checkpoint(checkpoint_dir)
    name = f"gq-trainer/{spec.checkpoint}"
    gate = threading.Semaphore(max_concurrency)
    app = FastAPI(title=name)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "model": name}

    @app.post("/v1/chat/completions")
    def chat(req: ChatRequest) -> dict:
        user = [m.content for m in req.messages if m.role == "user"]
        if not user:
            raise HTTPException(status_code=400, detail="no user message")
        with gate:
            try:
                text = model.decode_text(
                    vocab, user[-1], beam_size=spec.beam_size,
                    max_len=min(req.max_tokens, 512),
                )
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
        return {
            "id": "gq-completion",
            "object": "chat.completion",
            "model": name,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop",
            }],
        }

    return app


def serve(checkpoint_dir: str | Path, port: int, host: str = "127.0.0.1",
          max_concurrency: int = 4) -> None:
    app = build_app(checkpoint_dir, max_concurrency)
    uvicorn.run(app, host=host, port=port, log_level="warning")
