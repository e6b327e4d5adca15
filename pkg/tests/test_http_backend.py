"""HttpBackend wire-contract tests against a local threaded HTTP server.

The same JSON shapes are what a serving checkpoint must speak for
run_finetuned to work against it unchanged.
"""
from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from gqkit.backends import (
    AuthenticationError,
    BackendConfig,
    CapabilityError,
    GenerationRequest,
    HttpBackend,
    RetryExhaustedError,
    RetryPolicy,
)


class _Handler(BaseHTTPRequestHandler):
    server_version = "StubModel/0.1"
    fail_budget = 0  # shared; decremented per request while positive

    def log_message(self, *args):
        pass

    def _payload(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length) or b"{}")

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        cls = type(self)
        if cls.fail_budget > 0:
            cls.fail_budget -= 1
            self._send(503, {"error": "synthetic outage"})
            return
        auth = self.headers.get("Authorization", "")
        if auth != "Bearer test-key":
            self._send(401, {"error": "bad key"})
            return
        data = self._payload()
        if self.path.endswith("/chat/completions"):
            prompt = data["messages"][0]["content"]
            self._send(200, {
                "choices": [{"message": {"role": "assistant",
                                         "content": f"echo::{prompt}"}}],
                "model": data.get("model", ""),
            })
        elif self.path.endswith("/completions"):
            prompt = data["prompt"]
            tokens = [" " + t for t in prompt.split()]
            self._send(200, {
                "choices": [{
                    "logprobs": {
                        "tokens": tokens,
                        "token_logprobs": [None] + [-1.5] * (len(tokens) - 1),
                    }
                }]
            })
        elif self.path.endswith("/embeddings"):
            vectors = [{"embedding": [float(len(t)), 1.0]} for t in data["input"]]
            self._send(200, {"data": vectors})
        else:
            self._send(404, {"error": "no such endpoint"})


@pytest.fixture(scope="module")
def server():
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_port}/v1"
    httpd.shutdown()


def _backend(server, key="test-key", attempts=3):
    return HttpBackend(BackendConfig(
        api_base=server, model="stub-model", api_key=key,
        retry=RetryPolicy(max_attempts=attempts, base_delay=0.01),
    ))


def test_generate_text_round_trip(server):
    out = _backend(server).generate_text(GenerationRequest(prompt="hello wire"))
    assert out == "echo::hello wire"


def test_authentication_error(server):
    with pytest.raises(AuthenticationError):
        _backend(server, key="wrong").generate_text(GenerationRequest(prompt="x"))


def test_retry_recovers_from_transient_5xx(server):
    _Handler.fail_budget = 2
    try:
        out = _backend(server, attempts=4).generate_text(GenerationRequest(prompt="retry me"))
    finally:
        _Handler.fail_budget = 0
    assert out == "echo::retry me"


def test_retry_exhaustion(server):
    _Handler.fail_budget = 10
    try:
        with pytest.raises(RetryExhaustedError):
            _backend(server, attempts=2).generate_text(GenerationRequest(prompt="x"))
    finally:
        _Handler.fail_budget = 0


def test_score_tokens_over_wire(server):
    scores = _backend(server).score_tokens("ctx words", "tail tokens here")
    assert [s.logprob for s in scores] == [-1.5, -1.5, -1.5]


def test_embed_tokens_over_wire(server):
    out = _backend(server).embed_tokens("ab abc")
    assert [e.vector for e in out] == [(2.0, 1.0), (3.0, 1.0)]


def test_unknown_endpoint_is_capability_error(server):
    backend = _backend(server)
    with pytest.raises(CapabilityError):
        backend._post("/no-such-capability", {"model": "m"})


def test_concurrent_responses_match_requests(server):
    backend = _backend(server)
    prompts = [f"payload-{i}" for i in range(16)]
    with ThreadPoolExecutor(max_workers=8) as pool:
        outs = list(pool.map(
            lambda p: backend.generate_text(GenerationRequest(prompt=p)), prompts))
    assert outs == [f"echo::{p}" for p in prompts]
