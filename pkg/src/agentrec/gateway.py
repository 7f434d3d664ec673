"""Provider-agnostic chat-completion gateway.

Two live wire formats are supported (an OpenAI-compatible chat-completions
shape and a Gemini-style generateContent shape) plus a scripted provider that
replays canned responses in order for fully deterministic offline runs.
Rate limits (HTTP 429 or provider error codes) surface as RateLimitSignal and
are retried with exponential backoff; nothing else is retried.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

from .clock import SYSTEM_CLOCK
from .domain import ImageAttachment

ROLES = ("system", "user", "assistant", "tool")
FINISH_REASONS = ("stop", "length", "tool_call", "error")

DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_TOKENS = 1024


class GatewayError(Exception):
    pass


class RateLimitSignal(GatewayError):
    """Provider asked us to slow down; retryable."""


class RateLimited(GatewayError):
    """Still rate-limited after exhausting the retry policy."""


class TransportError(GatewayError):
    """Network-level failure; not retried."""


class ProviderError(GatewayError):
    """Non-rate-limit HTTP error from the provider."""

    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned {status}: {body[:200]}")
        self.status = status
        self.body = body


class ScriptExhausted(GatewayError):
    """More requests were sent than the script has entries."""


class ScriptMismatch(GatewayError):
    """A digest-guarded script entry saw a different request."""


class CapabilityError(GatewayError):
    """Provider lacks a required capability (e.g. image input)."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    image: ImageAttachment


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"bad role {self.role!r}")
        if not self.parts:
            raise ValueError("message needs at least one part")
        if self.role != "user" and any(isinstance(p, ImagePart) for p in self.parts):
            raise ValueError("image parts are only allowed in user messages")

    @classmethod
    def text(cls, role: str, text: str) -> "Message":
        return cls(role=role, parts=(TextPart(text),))

    @classmethod
    def user_with_image(cls, text: str, image: ImageAttachment) -> "Message":
        return cls(role="user", parts=(TextPart(text), ImagePart(image)))

    def joined_text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))

    def has_image(self) -> bool:
        return any(isinstance(p, ImagePart) for p in self.parts)


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    tool_specs: Optional[tuple] = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message must be system or user")
        if not (0.0 <= self.temperature <= 2.0):
            raise ValueError(f"temperature out of range: {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def has_image(self) -> bool:
        return any(m.has_image() for m in self.messages)


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    usage: Usage = field(default_factory=Usage)
    latency: float = 0.0

    def __post_init__(self):
        if self.finish_reason not in FINISH_REASONS:
            raise ValueError(f"bad finish_reason {self.finish_reason!r}")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "finish_reason": self.finish_reason,
            "usage": {
                "prompt_tokens": self.usage.prompt_tokens,
                "completion_tokens": self.usage.completion_tokens,
            },
            "latency": self.latency,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChatResponse":
        usage = d.get("usage", {})
        return cls(
            text=d["text"],
            finish_reason=d.get("finish_reason", "stop"),
            usage=Usage(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)),
            latency=d.get("latency", 0.0),
        )


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 0.5
    multiplier: float = 2.0
    max_delay: float = 16.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.multiplier <= 1.0:
            raise ValueError("multiplier must be > 1")

    def delay(self, attempt: int) -> float:
        """Backoff before retrying after attempt n (1-based)."""
        return min(self.base_delay * self.multiplier ** (attempt - 1), self.max_delay)


DEFAULT_RETRY_POLICY = RetryPolicy()


def request_digest(request: ChatRequest) -> str:
    """Stable sha256 over the request content; image payloads are hashed."""
    parts = []
    for m in request.messages:
        for p in m.parts:
            if isinstance(p, TextPart):
                parts.append({"role": m.role, "text": p.text})
            else:
                parts.append(
                    {
                        "role": m.role,
                        "image_sha256": hashlib.sha256(p.image.bytes).hexdigest(),
                        "media_type": p.image.media_type,
                    }
                )
    blob = json.dumps(
        {
            "model_id": request.model_id,
            "parts": parts,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScriptEntry:
    """One canned reply: a response, or a rate-limit push-back."""

    response: Optional[ChatResponse] = None
    rate_limit: bool = False
    expected_request_digest: Optional[str] = None

    def __post_init__(self):
        if self.rate_limit == (self.response is not None):
            raise ValueError("entry must carry exactly one of response / rate_limit")


@dataclass(frozen=True)
class ProviderScript:
    entries: tuple[ScriptEntry, ...]


@dataclass
class CallTrace:
    """What one complete_chat call did: attempts, backoff delays, latency."""

    attempts: int = 0
    delays: list[float] = field(default_factory=list)
    latency: float = 0.0


class Provider:
    """A handle that can send one ChatRequest and return one ChatResponse.

    Shareable across threads; concurrent send() calls are independent.
    """

    multimodal: bool = False

    def send(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


class ScriptedProvider(Provider):
    """Replays a ProviderScript in order. Consumption is serialized."""

    def __init__(self, script: ProviderScript, multimodal: bool = True):
        self._entries = list(script.entries)
        self._pos = 0
        self._lock = threading.Lock()
        self.multimodal = multimodal

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            if self._pos >= len(self._entries):
                raise ScriptExhausted(f"script exhausted after {self._pos} calls")
            entry = self._entries[self._pos]
            self._pos += 1
        if entry.expected_request_digest is not None:
            got = request_digest(request)
            if got != entry.expected_request_digest:
                raise ScriptMismatch(
                    f"expected digest {entry.expected_request_digest[:12]}..., got {got[:12]}..."
                )
        if entry.rate_limit:
            raise RateLimitSignal("scripted rate limit")
        return entry.response


def make_scripted_provider(script: ProviderScript, multimodal: bool = True) -> ScriptedProvider:
    return ScriptedProvider(script, multimodal=multimodal)


# transport(method, url, headers, payload, timeout) -> (status, body_text)
Transport = Callable[[str, str, dict, Optional[dict], float], tuple[int, str]]


def requests_transport(method: str, url: str, headers: dict, payload: Optional[dict], timeout: float):
    import requests

    try:
        resp = requests.request(method, url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as e:
        raise TransportError(str(e)) from e
    return resp.status_code, resp.text


def _data_url(image: ImageAttachment) -> str:
    mime = f"image/{image.media_type}"
    return f"data:{mime};base64,{base64.b64encode(image.bytes).decode('ascii')}"


class OpenAiCompatProvider(Provider):
    """Groq-style endpoint speaking the OpenAI chat-completions JSON shape."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        multimodal: bool = False,
        timeout: float = 30.0,
        transport: Optional[Transport] = None,
        clock=SYSTEM_CLOCK,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.multimodal = multimodal
        self.timeout = timeout
        self.transport = transport or requests_transport
        self.clock = clock

    def build_payload(self, request: ChatRequest) -> dict:
        messages = []
        for m in request.messages:
            if m.has_image():
                content: Any = []
                for p in m.parts:
                    if isinstance(p, TextPart):
                        content.append({"type": "text", "text": p.text})
                    else:
                        content.append({"type": "image_url", "image_url": {"url": _data_url(p.image)}})
            else:
                content = m.joined_text()
            messages.append({"role": m.role, "content": content})
        return {
            "model": request.model_id,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def send(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/chat/completions"
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        started = self.clock.monotonic()
        status, body = self.transport("POST", url, headers, self.build_payload(request), self.timeout)
        latency = self.clock.monotonic() - started
        if status == 429:
            raise RateLimitSignal(body)
        if status >= 400:
            raise ProviderError(status, body)
        try:
            data = json.loads(body)
            choice = data["choices"][0]
            usage = data.get("usage", {})
            return ChatResponse(
                text=choice["message"]["content"] or "",
                finish_reason=_map_finish(choice.get("finish_reason")),
                usage=Usage(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)),
                latency=latency,
            )
        except (KeyError, IndexError, ValueError) as e:
            raise ProviderError(status, f"unparseable response body: {e}") from e


def _map_finish(reason: Optional[str]) -> str:
    return {
        "stop": "stop",
        "length": "length",
        "max_tokens": "length",
        "tool_calls": "tool_call",
        "function_call": "tool_call",
    }.get(reason or "stop", "stop")


class GeminiProvider(Provider):
    """Gemini-style generateContent endpoint adapter."""

    multimodal = True

    def __init__(
        self,
        base_url: str,
        api_key: str,
        timeout: float = 30.0,
        transport: Optional[Transport] = None,
        clock=SYSTEM_CLOCK,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.transport = transport or requests_transport
        self.clock = clock

    def build_payload(self, request: ChatRequest) -> dict:
        system_texts = []
        contents = []
        for m in request.messages:
            if m.role == "system":
                system_texts.append(m.joined_text())
                continue
            parts = []
            for p in m.parts:
                if isinstance(p, TextPart):
                    parts.append({"text": p.text})
                else:
                    parts.append(
                        {
                            "inline_data": {
                                "mime_type": f"image/{p.image.media_type}",
                                "data": base64.b64encode(p.image.bytes).decode("ascii"),
                            }
                        }
                    )
            contents.append({"role": "model" if m.role == "assistant" else "user", "parts": parts})
        payload: dict = {
            "contents": contents,
            "generationConfig": {
                "temperature": request.temperature,
                "maxOutputTokens": request.max_tokens,
            },
        }
        if system_texts:
            payload["systemInstruction"] = {"parts": [{"text": "\n".join(system_texts)}]}
        return payload

    def send(self, request: ChatRequest) -> ChatResponse:
        url = f"{self.base_url}/models/{request.model_id}:generateContent?key={self.api_key}"
        started = self.clock.monotonic()
        status, body = self.transport("POST", url, {"Content-Type": "application/json"}, self.build_payload(request), self.timeout)
        latency = self.clock.monotonic() - started
        if status == 429:
            raise RateLimitSignal(body)
        if status >= 400:
            # Gemini also reports quota exhaustion via an error status field.
            try:
                err = json.loads(body).get("error", {})
                if err.get("status") == "RESOURCE_EXHAUSTED":
                    raise RateLimitSignal(body)
            except (ValueError, AttributeError):
                pass
            raise ProviderError(status, body)
        try:
            data = json.loads(body)
            candidate = data["candidates"][0]
            text = "".join(p.get("text", "") for p in candidate["content"]["parts"])
            usage = data.get("usageMetadata", {})
            return ChatResponse(
                text=text,
                finish_reason="length" if candidate.get("finishReason") == "MAX_TOKENS" else "stop",
                usage=Usage(usage.get("promptTokenCount", 0), usage.get("candidatesTokenCount", 0)),
                latency=latency,
            )
        except (KeyError, IndexError, ValueError) as e:
            raise ProviderError(status, f"unparseable response body: {e}") from e


def complete_chat(
    provider: Provider,
    request: ChatRequest,
    policy: RetryPolicy = DEFAULT_RETRY_POLICY,
    clock=SYSTEM_CLOCK,
    trace: Optional[CallTrace] = None,
) -> ChatResponse:
    """Send a request, retrying rate-limit signals with exponential backoff.

    Backoff before retry n is min(base_delay * multiplier**(n-1), max_delay).
    Only RateLimitSignal is retried; transport and provider errors propagate
    immediately. Attempt count and delays are recorded on the trace.
    """
    trace = trace if trace is not None else CallTrace()
    for attempt in range(1, policy.max_attempts + 1):
        trace.attempts = attempt
        try:
            response = provider.send(request)
        except RateLimitSignal:
            if attempt >= policy.max_attempts:
                raise RateLimited(f"rate-limited after {attempt} attempts") from None
            delay = policy.delay(attempt)
            trace.delays.append(delay)
            clock.sleep(delay)
            continue
        trace.latency += response.latency
        return response
    raise RateLimited(f"rate-limited after {policy.max_attempts} attempts")  # pragma: no cover


def complete_multimodal(
    provider: Provider,
    request: ChatRequest,
    policy: RetryPolicy = DEFAULT_RETRY_POLICY,
    clock=SYSTEM_CLOCK,
    trace: Optional[CallTrace] = None,
) -> ChatResponse:
    """complete_chat for image-bearing requests; checks provider capability."""
    if not request.has_image():
        raise ValueError("multimodal request must contain at least one image part")
    if not provider.multimodal:
        raise CapabilityError("provider does not accept image input")
    return complete_chat(provider, request, policy, clock=clock, trace=trace)


def load_script(path: Path | str) -> ProviderScript:
    """Load a script fixture file: a JSON array of entries.

    Entry keys: ``response`` (ChatResponse object) or ``rate_limit: true``;
    optional ``expected_request_digest`` (hex) or ``expected_request`` (a
    request sketch whose image parts reference files relative to the script,
    from which the digest is computed).
    """
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise ValueError(f"{path}: script file must be a JSON array")
    entries = []
    for item in raw:
        digest = item.get("expected_request_digest")
        if digest is None and "expected_request" in item:
            digest = request_digest(_request_from_sketch(item["expected_request"], path.parent))
        if item.get("rate_limit"):
            entries.append(ScriptEntry(rate_limit=True, expected_request_digest=digest))
        else:
            entries.append(
                ScriptEntry(
                    response=ChatResponse.from_dict(item["response"]),
                    expected_request_digest=digest,
                )
            )
    return ProviderScript(entries=tuple(entries))


def _request_from_sketch(sketch: dict, base_dir: Path) -> ChatRequest:
    messages = []
    for m in sketch["messages"]:
        parts: list[Part] = []
        for p in m["parts"]:
            if "text" in p:
                parts.append(TextPart(p["text"]))
            else:
                data = (base_dir / p["image_path"]).read_bytes()
                parts.append(ImagePart(ImageAttachment(bytes=data, media_type=p["media_type"])))
        messages.append(Message(role=m["role"], parts=tuple(parts)))
    return ChatRequest(
        model_id=sketch["model_id"],
        messages=tuple(messages),
        temperature=sketch.get("temperature", DEFAULT_TEMPERATURE),
        max_tokens=sketch.get("max_tokens", DEFAULT_MAX_TOKENS),
    )
