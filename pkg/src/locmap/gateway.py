"""Chat-completion gateway: prompt templates, content-addressed response cache,
replay for offline runs, and JSON recovery from free-form model output."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
TEMPLATE_IDS = (
    "graph_extraction",
    "trajectory_extraction",
    "graph_revision",
    "trajectory_revision",
    "alias_merge",
    "eval_alignment",
)
PROFILES = ("holocaust", "lake_district")
DEFAULT_MODEL = "gpt-4o-mini"
CONTEXT_TOKENS = 128_000
API_KEY_ENV = "LOCMAP_API_KEY"
RETRY_DELAYS = (1.0, 4.0, 16.0)


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    pass


class ReplayMiss(GatewayError):
    """The replay store has no entry for a request."""


class JsonRecoveryError(GatewayError):
    pass


class SchemaError(GatewayError):
    """Model JSON parsed but does not have the expected shape."""


class MissingBinding(GatewayError, KeyError):
    pass


class ContextOverflow(GatewayError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_output_tokens: int = 4096

    def __post_init__(self):
        msgs = tuple((str(r), str(t)) for r, t in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("a chat request needs at least one message")
        for role, _ in msgs:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
        first = next((r for r, _ in msgs if r != "system"), None)
        if first != "user":
            raise ValueError("the first non-system message must come from the user")
        if not self.temperature >= 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    def key(self) -> str:
        return cache_key(self)

    def to_json(self) -> dict[str, Any]:
        return {
            "model": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
            "messages": [{"role": r, "content": t} for r, t in self.messages],
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    token_usage: tuple[int, int] = (0, 0)


def cache_key(req: ChatRequest) -> str:
    """SHA-256 over model id, temperature and messages, as canonical JSON."""
    payload = json.dumps(
        {
            "model": req.model_id,
            "temperature": float(req.temperature),
            "messages": [[r, t] for r, t in req.messages],
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Transport(Protocol):
    def send(self, req: ChatRequest) -> ChatResponse: ...


class ResponseCache:
    """One JSON file per request digest under ``root/<first two hex chars>/``.

    Entries are write-once: a second writer for the same key keeps the first
    stored value, and files appear atomically via hard-link of a temp file.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> ChatResponse | None:
        path = self.path(key)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        usage = data.get("usage") or [0, 0]
        return ChatResponse(data["text"], (int(usage[0]), int(usage[1])))

    def __contains__(self, key: str) -> bool:
        return self.path(key).exists()

    def put(self, req: ChatRequest, resp: ChatResponse) -> ChatResponse:
        key = cache_key(req)
        path = self.path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        record = {
            "key": key,
            "request": req.to_json(),
            "text": resp.text,
            "usage": list(resp.token_usage),
        }
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, ensure_ascii=False, indent=1, sort_keys=True)
                fh.write("\n")
            try:
                os.link(tmp, path)
            except FileExistsError:
                pass
        finally:
            os.unlink(tmp)
        stored = self.get(key)
        assert stored is not None
        return stored

    def keys(self) -> list[str]:
        if not self.root.exists():
            return []
        return sorted(p.stem for p in self.root.glob("*/*.json"))


class HttpTransport:
    """POSTs chat-completions bodies to ``{base_url}/chat/completions``."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 600.0,
        retry_delays: tuple[float, ...] = RETRY_DELAYS,
        sleep: Callable[[float], None] = time.sleep,
        client: httpx.Client | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.retry_delays = retry_delays
        self.sleep = sleep
        self.client = client or httpx.Client(timeout=timeout)

    def send(self, req: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Exception | None = None
        # one initial attempt, then one retry per backoff delay
        for attempt in range(len(self.retry_delays) + 1):
            if attempt:
                logger.warning("chat request failed (%s); retry %d in %.0fs", last, attempt, self.retry_delays[attempt - 1])
                self.sleep(self.retry_delays[attempt - 1])
            try:
                resp = self.client.post(self.url, json=req.to_json(), headers=headers)
            except httpx.TransportError as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return _parse_completion(resp.json())
        raise TransportError(f"giving up after {len(self.retry_delays) + 1} attempts: {last}")


def _parse_completion(body: dict[str, Any]) -> ChatResponse:
    try:
        text = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion body: {exc}") from exc
    usage = body.get("usage") or {}
    return ChatResponse(
        text or "",
        (int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
    )


class CallableTransport:
    """Adapts a plain function ``request -> text`` (scripted models, tests)."""

    def __init__(self, fn: Callable[[ChatRequest], str]):
        self.fn = fn
        self.calls = 0

    def send(self, req: ChatRequest) -> ChatResponse:
        self.calls += 1
        text = self.fn(req)
        n_in = sum(len(t) for _, t in req.messages) // 4
        return ChatResponse(text, (n_in, len(text) // 4))


@dataclass
class Gateway:
    """Cache-first completion. With no transport the cache acts as a replay store."""

    cache: ResponseCache | None = None
    transport: Transport | None = None
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_output_tokens: int = 4096
    concurrency: int = 4
    context_tokens: int = CONTEXT_TOKENS
    _slots: threading.BoundedSemaphore = field(init=False, repr=False)

    def __post_init__(self):
        if self.cache is None and self.transport is None:
            raise ValueError("gateway needs a transport, a replay cache, or both")
        self._slots = threading.BoundedSemaphore(max(1, self.concurrency))

    @property
    def replay(self) -> bool:
        return self.transport is None

    def request(self, messages: list[tuple[str, str]] | tuple[tuple[str, str], ...]) -> ChatRequest:
        return ChatRequest(self.model_id, tuple(messages), self.temperature, self.max_output_tokens)

    def complete(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        if self.transport is None:
            raise ReplayMiss(f"no recorded response for request {key[:12]}")
        approx = sum(len(t) for _, t in req.messages) // 4
        if approx + req.max_output_tokens > self.context_tokens:
            raise ContextOverflow(
                f"request needs about {approx} input tokens; context is {self.context_tokens}"
            )
        with self._slots:
            resp = self.transport.send(req)
        if self.cache is not None:
            resp = self.cache.put(req, resp)
        return resp

    def ask(self, messages) -> str:
        return self.complete(self.request(messages)).text


_FENCE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n?(.*?)```", re.DOTALL)


def extract_json_block(text: str) -> Any:
    """Parse JSON out of model output.

    Tried in order: the whole text, each fenced block, a bare
    ``"key": value, ...`` body wrapped in braces, the span from the first
    ``{`` to the last ``}``, and the span from the first ``[`` to the last ``]``.
    """
    fenced = [m.group(1) for m in _FENCE.finditer(text)]
    stripped = re.sub(r"```[A-Za-z0-9_-]*", "", text)
    candidates = [text, *fenced]
    # a bare member list must be wrapped before an inner object is mistaken for the answer
    for block in [*fenced, stripped]:
        body = block.strip().rstrip(",")
        if re.match(r'"[^"]*"\s*:', body):
            candidates.append("{" + body + "}")
    for open_, close in ("{}", "[]"):
        lo, hi = stripped.find(open_), stripped.rfind(close)
        if lo != -1 and hi > lo:
            candidates.append(stripped[lo : hi + 1])
    for cand in candidates:
        try:
            return json.loads(cand)
        except (json.JSONDecodeError, ValueError):
            continue
    raise JsonRecoveryError(f"no JSON found in response: {text[:120]!r}")


_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


def load_template(template_id: str, profile: str = "holocaust") -> str:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template {template_id!r}")
    if profile not in PROFILES:
        raise KeyError(f"unknown domain profile {profile!r}")
    res = resources.files("locmap") / "templates" / profile / f"{template_id}.txt"
    return res.read_text(encoding="utf-8").rstrip("\n")


def template_placeholders(template_id: str, profile: str = "holocaust") -> list[str]:
    return _PLACEHOLDER.findall(load_template(template_id, profile))


def render_prompt(template_id: str, bindings: dict[str, str] | None = None, profile: str = "holocaust") -> str:
    bindings = bindings or {}
    text = load_template(template_id, profile)
    missing = [p for p in _PLACEHOLDER.findall(text) if p not in bindings]
    if missing:
        raise MissingBinding(f"{template_id}: no value for {', '.join(sorted(set(missing)))}")
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), text)
