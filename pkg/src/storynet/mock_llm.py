"""Bundled mock server speaking the OpenAI-style wire protocol, for CI.

Serves /v1/chat/completions and /v1/embeddings. Responses are deterministic
functions of the request, so end-to-end runs against the mock are
reproducible. A canned-response script (list of entries, consumed in
order) injects failures or fixed bodies:

    {"status": 500}                      -> plain 500 once
    {"content": "CHOICE: 1\\nSTORY: x"}  -> fixed chat content once
    {"body": {...}}                      -> raw JSON body once

With the script exhausted (or absent) the default behavior answers every
chat request with a valid CHOICE/STORY pair derived from a hash of the
prompt, and every embeddings request with hash-seeded vectors.
"""
from __future__ import annotations

import hashlib
import json
import random
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

_NUMBERED_LINE_RE = re.compile(r"^(\d+)\.\s", re.MULTILINE)

STORY_OPENERS = (
    "The door swung open onto a field of silver grass under two moons.",
    "At midnight the key began to hum with a faint, familiar melody.",
    "John blinked, and the hallway had become an observatory.",
    "The cat led the way down a staircase that had not existed yesterday.",
    "A letter arrived with no stamp, only a drawing of a spiral.",
    "Rain fell upward that evening, and nobody seemed to mind.",
    "The locksmith smiled and said the key had never been lost at all.",
    "Beyond the garden gate, the street unrolled like a paper map.",
)

STORY_CLOSERS = (
    "Nothing afterwards was ever quite so ordinary again.",
    "He wrote it all down, in case morning made him doubt it.",
    "The jingle of the key, from then on, sounded like laughter.",
    "Somewhere far above, something vast and patient turned over in its sleep.",
    "And the cat, as always, kept the rest of the story to itself.",
    "By dawn only a faint shimmer on the doormat remained.",
)


def _candidate_count(prompt: str) -> int:
    """Longest ascending run 1..k of numbered lines in the prompt."""
    expected = 1
    for match in _NUMBERED_LINE_RE.finditer(prompt):
        if int(match.group(1)) == expected:
            expected += 1
    return max(1, expected - 1)


def default_chat_content(prompt: str) -> str:
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    k = _candidate_count(prompt)
    choice = digest[0] % k + 1
    rng = random.Random(digest)
    story = " ".join(
        [
            rng.choice(STORY_OPENERS),
            rng.choice(STORY_OPENERS),
            rng.choice(STORY_CLOSERS),
        ]
    )
    return f"CHOICE: {choice}\nSTORY: {story}"


def deterministic_embedding(text: str, dim: int) -> list[float]:
    rng = random.Random(hashlib.sha256(text.encode("utf-8")).hexdigest())
    return [rng.uniform(-1.0, 1.0) for _ in range(dim)]


class _Handler(BaseHTTPRequestHandler):
    server: "MockLLMServer"

    def do_POST(self) -> None:  # noqa: N802 (BaseHTTPRequestHandler API)
        length = int(self.headers.get("Content-Length", "0"))
        try:
            request = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send(400, {"error": "invalid json"})
            return
        if self.server.latency:
            time.sleep(self.server.latency)
        if self.path.rstrip("/").endswith("/chat/completions"):
            self._chat(request)
        elif self.path.rstrip("/").endswith("/embeddings"):
            self._embeddings(request)
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def _chat(self, request: dict) -> None:
        server = self.server
        with server.lock:
            server.chat_requests.append(request)
            entry = server.script.pop(0) if server.script else None
        if server.always_status is not None:
            self._send(server.always_status, {"error": "scripted failure"})
            return
        if entry is not None:
            status = int(entry.get("status", 200))
            if status != 200:
                self._send(status, {"error": "scripted failure"})
                return
            if "body" in entry:
                self._send(200, entry["body"])
                return
            content = entry.get("content", "")
        else:
            prompt = ""
            for message in request.get("messages", []):
                if message.get("role") == "user":
                    prompt = message.get("content", "")
            content = default_chat_content(prompt)
        prompt_tokens = sum(len(str(m.get("content", ""))) // 4 for m in request.get("messages", []))
        self._send(
            200,
            {
                "id": f"mock-{len(server.chat_requests)}",
                "object": "chat.completion",
                "model": request.get("model", "mock"),
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": content},
                        "finish_reason": "stop",
                    }
                ],
                "usage": {
                    "prompt_tokens": prompt_tokens,
                    "completion_tokens": len(content) // 4,
                    "total_tokens": prompt_tokens + len(content) // 4,
                },
            },
        )

    def _embeddings(self, request: dict) -> None:
        server = self.server
        with server.lock:
            server.embedding_requests.append(request)
        if server.always_status is not None:
            self._send(server.always_status, {"error": "scripted failure"})
            return
        inputs = request.get("input", [])
        if isinstance(inputs, str):
            inputs = [inputs]
        data = [
            {
                "object": "embedding",
                "index": i,
                "embedding": deterministic_embedding(text, server.embed_dim),
            }
            for i, text in enumerate(inputs)
        ]
        self._send(200, {"object": "list", "data": data, "model": request.get("model", "mock")})

    def _send(self, status: int, body: dict) -> None:
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args) -> None:  # silence per-request stderr noise
        pass


class MockLLMServer:
    """Threaded HTTP server; start() binds an ephemeral port by default."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        script: list[dict] | None = None,
        always_status: int | None = None,
        latency: float = 0.0,
        embed_dim: int = 16,
    ):
        self.host = host
        self.port = port
        self.script = list(script or [])
        self.always_status = always_status
        self.latency = latency
        self.embed_dim = embed_dim
        self.lock = threading.Lock()
        self.chat_requests: list[dict] = []
        self.embedding_requests: list[dict] = []
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> "MockLLMServer":
        self._httpd = ThreadingHTTPServer((self.host, self.port), _Handler)
        for attr in ("script", "always_status", "latency", "embed_dim", "lock",
                     "chat_requests", "embedding_requests"):
            setattr(self._httpd, attr, getattr(self, attr))
        self.port = self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def chat_url(self) -> str:
        return f"{self.base_url}/v1/chat/completions"

    @property
    def embeddings_url(self) -> str:
        return f"{self.base_url}/v1/embeddings"

    def __enter__(self) -> "MockLLMServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
