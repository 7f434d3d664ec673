import base64
import json

import pytest

from agentrec.clock import ManualClock
from agentrec.domain import ImageAttachment
from agentrec.gateway import (
    CallTrace,
    CapabilityError,
    ChatRequest,
    ChatResponse,
    GeminiProvider,
    Message,
    OpenAiCompatProvider,
    Provider,
    ProviderError,
    ProviderScript,
    RateLimited,
    RetryPolicy,
    ScriptEntry,
    ScriptExhausted,
    ScriptMismatch,
    TransportError,
    complete_chat,
    complete_multimodal,
    load_script,
    make_scripted_provider,
    request_digest,
)

from .test_domain import PNG_1PX


def simple_request(text="hi", model="llama3-70b-8192"):
    return ChatRequest(model_id=model, messages=(Message.text("user", text),))


def script_of(*entries):
    return ProviderScript(entries=tuple(entries))


def ok(text, latency=0.0):
    return ScriptEntry(response=ChatResponse(text=text, latency=latency))


RATE_LIMIT = ScriptEntry(rate_limit=True)


def test_scripted_replay_in_order():
    provider = make_scripted_provider(script_of(ok("one"), ok("two")))
    assert provider.send(simple_request()).text == "one"
    assert provider.send(simple_request()).text == "two"


def test_script_exhaustion():
    provider = make_scripted_provider(script_of(ok("one"), ok("two")))
    provider.send(simple_request())
    provider.send(simple_request())
    with pytest.raises(ScriptExhausted):
        provider.send(simple_request())


def test_script_digest_guard():
    guarded = ScriptEntry(
        response=ChatResponse(text="guarded"),
        expected_request_digest=request_digest(simple_request("expected prompt")),
    )
    provider = make_scripted_provider(script_of(guarded))
    with pytest.raises(ScriptMismatch):
        provider.send(simple_request("different prompt"))


def test_retry_until_success():
    clock = ManualClock()
    provider = make_scripted_provider(script_of(RATE_LIMIT, RATE_LIMIT, ok("ok")))
    trace = CallTrace()
    policy = RetryPolicy(max_attempts=3, base_delay=0.5, multiplier=2.0, max_delay=16.0)
    response = complete_chat(provider, simple_request(), policy, clock=clock, trace=trace)
    assert response.text == "ok"
    assert trace.attempts == 3
    assert trace.delays == [0.5, 1.0]
    assert clock.sleeps == [0.5, 1.0]


def test_rate_limited_after_max_attempts():
    clock = ManualClock()
    provider = make_scripted_provider(script_of(RATE_LIMIT, RATE_LIMIT, RATE_LIMIT))
    with pytest.raises(RateLimited):
        complete_chat(provider, simple_request(), RetryPolicy(max_attempts=3), clock=clock)
    # Two backoffs happened, then the third rate limit gave up.
    assert clock.sleeps == [0.5, 1.0]


def test_single_response_single_attempt():
    trace = CallTrace()
    provider = make_scripted_provider(script_of(ok("hello")))
    response = complete_chat(provider, simple_request(), trace=trace)
    assert response.text == "hello"
    assert trace.attempts == 1
    assert trace.delays == []


def test_backoff_schedule_is_capped():
    policy = RetryPolicy(max_attempts=10, base_delay=0.5, multiplier=2.0, max_delay=4.0)
    assert [policy.delay(n) for n in range(1, 6)] == [0.5, 1.0, 2.0, 4.0, 4.0]


def test_scripted_determinism_across_copies():
    entries = (ok("a", latency=0.1), RATE_LIMIT, ok("b", latency=0.2))
    responses = []
    for _ in range(2):
        clock = ManualClock()
        provider = make_scripted_provider(ProviderScript(entries=entries))
        responses.append(
            [
                complete_chat(provider, simple_request(), clock=clock).to_dict(),
                complete_chat(provider, simple_request(), clock=clock).to_dict(),
            ]
        )
    assert responses[0] == responses[1]


class FailingProvider(Provider):
    def __init__(self, exc):
        self.exc = exc
        self.calls = 0

    def send(self, request):
        self.calls += 1
        raise self.exc


def test_non_retryable_errors_stop_immediately():
    for exc in (ProviderError(400, "bad request"), TransportError("boom")):
        provider = FailingProvider(exc)
        with pytest.raises(type(exc)):
            complete_chat(provider, simple_request(), RetryPolicy(max_attempts=5))
        assert provider.calls == 1


def test_multimodal_happy_path():
    image = ImageAttachment(bytes=PNG_1PX, media_type="png")
    request = ChatRequest(
        model_id="gemini-1.5-pro",
        messages=(Message.user_with_image("what brand is this?", image),),
    )
    provider = make_scripted_provider(script_of(ok("Brand A sneaker")), multimodal=True)
    assert complete_multimodal(provider, request).text == "Brand A sneaker"


def test_multimodal_capability_error():
    image = ImageAttachment(bytes=PNG_1PX, media_type="png")
    request = ChatRequest(
        model_id="m", messages=(Message.user_with_image("q", image),)
    )
    provider = make_scripted_provider(script_of(ok("x")), multimodal=False)
    with pytest.raises(CapabilityError):
        complete_multimodal(provider, request)


def test_multimodal_requires_image_part():
    provider = make_scripted_provider(script_of(ok("x")))
    with pytest.raises(ValueError):
        complete_multimodal(provider, simple_request())


def test_message_invariants():
    with pytest.raises(ValueError):
        Message(role="bogus", parts=(Message.text("user", "x").parts[0],))
    with pytest.raises(ValueError):
        Message(role="assistant", parts=(Message.user_with_image("t", ImageAttachment(bytes=PNG_1PX, media_type="png")).parts[1],))
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", messages=())
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", messages=(Message.text("assistant", "x"),))
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", messages=(Message.text("user", "x"),), temperature=3.0)


class RecordingTransport:
    def __init__(self, status=200, body=""):
        self.status = status
        self.body = body
        self.requests = []

    def __call__(self, method, url, headers, payload, timeout):
        self.requests.append((method, url, headers, payload))
        return self.status, self.body


def test_openai_wire_format_and_parse():
    body = json.dumps(
        {
            "choices": [{"message": {"content": "answer"}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 7, "completion_tokens": 3},
        }
    )
    transport = RecordingTransport(200, body)
    provider = OpenAiCompatProvider(
        "https://api.example.com/openai/v1", "sk-test", multimodal=True, transport=transport
    )
    image = ImageAttachment(bytes=PNG_1PX, media_type="png")
    request = ChatRequest(
        model_id="llama3-70b-8192",
        messages=(
            Message.text("system", "be brief"),
            Message.user_with_image("what is this?", image),
        ),
    )
    response = provider.send(request)
    assert response.text == "answer"
    assert response.usage.prompt_tokens == 7

    method, url, headers, payload = transport.requests[0]
    assert url.endswith("/chat/completions")
    assert headers["Authorization"] == "Bearer sk-test"
    assert payload["model"] == "llama3-70b-8192"
    assert payload["messages"][0] == {"role": "system", "content": "be brief"}
    image_part = payload["messages"][1]["content"][1]
    assert image_part["type"] == "image_url"
    assert image_part["image_url"]["url"].startswith("data:image/png;base64,")
    encoded = image_part["image_url"]["url"].split(",", 1)[1]
    assert base64.b64decode(encoded) == PNG_1PX


def test_openai_maps_429_to_rate_limit():
    transport = RecordingTransport(429, "slow down")
    provider = OpenAiCompatProvider("https://x", "k", transport=transport)
    with pytest.raises(RateLimited):
        complete_chat(provider, simple_request(), RetryPolicy(max_attempts=1))


def test_openai_maps_4xx_to_provider_error():
    transport = RecordingTransport(500, "oops")
    provider = OpenAiCompatProvider("https://x", "k", transport=transport)
    with pytest.raises(ProviderError):
        provider.send(simple_request())


def test_gemini_wire_format_and_parse():
    body = json.dumps(
        {
            "candidates": [
                {"content": {"parts": [{"text": "gemini says"}]}, "finishReason": "STOP"}
            ],
            "usageMetadata": {"promptTokenCount": 5, "candidatesTokenCount": 2},
        }
    )
    transport = RecordingTransport(200, body)
    provider = GeminiProvider("https://gen.example.com/v1beta", "key123", transport=transport)
    image = ImageAttachment(bytes=PNG_1PX, media_type="png")
    request = ChatRequest(
        model_id="gemini-1.5-pro",
        messages=(
            Message.text("system", "role prompt"),
            Message.user_with_image("describe", image),
        ),
    )
    response = provider.send(request)
    assert response.text == "gemini says"

    _, url, _, payload = transport.requests[0]
    assert "models/gemini-1.5-pro:generateContent" in url
    assert payload["systemInstruction"]["parts"][0]["text"] == "role prompt"
    assert payload["contents"][0]["parts"][1]["inline_data"]["mime_type"] == "image/png"


def test_gemini_resource_exhausted_is_rate_limit():
    transport = RecordingTransport(403, json.dumps({"error": {"status": "RESOURCE_EXHAUSTED"}}))
    provider = GeminiProvider("https://x", "k", transport=transport)
    with pytest.raises(RateLimited):
        complete_chat(provider, simple_request(model="gemini-1.5-pro"), RetryPolicy(max_attempts=1))


def test_load_script_file(tmp_path):
    image_file = tmp_path / "img.png"
    image_file.write_bytes(PNG_1PX)
    script_file = tmp_path / "script.json"
    script_file.write_text(
        json.dumps(
            [
                {"rate_limit": True},
                {
                    "response": {"text": "with guard", "finish_reason": "stop"},
                    "expected_request": {
                        "model_id": "m",
                        "messages": [
                            {
                                "role": "user",
                                "parts": [
                                    {"text": "look"},
                                    {"image_path": "img.png", "media_type": "png"},
                                ],
                            }
                        ],
                    },
                },
                {"response": {"text": "plain"}},
            ]
        )
    )
    script = load_script(script_file)
    assert len(script.entries) == 3
    assert script.entries[0].rate_limit
    expected = ChatRequest(
        model_id="m",
        messages=(
            Message.user_with_image("look", ImageAttachment(bytes=PNG_1PX, media_type="png")),
        ),
    )
    assert script.entries[1].expected_request_digest == request_digest(expected)
    assert script.entries[2].response.text == "plain"
