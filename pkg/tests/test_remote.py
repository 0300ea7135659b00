import json
import threading
import time

import httpx
import pytest

from thinktax.backend import EndpointConfig, FatalBackendError, GenerationRequest, RemoteBackend, RetryableBackendError, remote_generate
from thinktax.backend.remote import ApproximateTokenCountWarning, build_payload, parse_response

CFG = EndpointConfig(base_url="http://llm.test/v1", model="m", max_retries=2, backoff_base=0.1)


def _completion(text="#### 4", tokens=12, finish="stop", usage=True):
    body = {"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": finish}]}
    if usage:
        body["usage"] = {"prompt_tokens": 30, "completion_tokens": tokens}
    return body


def _backend(handler, cfg=CFG, sleeps=None):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return RemoteBackend(cfg, client=client, sleep=(sleeps.append if sleeps is not None else lambda s: None))


def _req(**kw):
    base = dict(question_id="q1", question="What is 2+2?", mode="think", max_new_tokens=100, seed=7)
    base.update(kw)
    return GenerationRequest(**base)


def test_payload_extension_field():
    body = build_payload(_req(), CFG)
    assert body["chat_template_kwargs"] == {"enable_thinking": True}
    assert body["max_tokens"] == 100 and body["seed"] == 7
    assert body["messages"] == [{"role": "user", "content": "What is 2+2?"}]
    assert build_payload(_req(mode="nothink"), CFG)["chat_template_kwargs"]["enable_thinking"] is False


def test_payload_system_directive_trace_and_hint():
    cfg = EndpointConfig(base_url="http://x", model="m", mode_toggle="system_directive", temperature=0.6)
    body = build_payload(_req(mode="nothink", trace="partial work", hint="5", system="Be brief."), cfg)
    msgs = body["messages"]
    assert msgs[0] == {"role": "system", "content": "Be brief.\n/no_think"}
    assert msgs[1]["content"].startswith("A previous attempt gave the answer 5.")
    assert "partial work" in msgs[2]["content"] and msgs[2]["role"] == "user"
    assert "chat_template_kwargs" not in body and body["temperature"] == 0.6
    cfg2 = EndpointConfig(base_url="http://x", model="m", trace_role="assistant")
    msgs2 = build_payload(_req(mode="nothink", trace="partial work"), cfg2)["messages"]
    assert msgs2[1] == {"role": "assistant", "content": "partial work"}


def test_parse_natural_and_length():
    out = parse_response(_completion(tokens=12), _req())
    assert out.stop_reason == "natural" and out.tokens_generated == 12
    out = parse_response(_completion(tokens=100, finish="length"), _req())
    assert out.stop_reason == "budget_hit" and out.tokens_generated == 100
    out = parse_response(_completion(tokens=100, finish="stop"), _req())
    assert out.stop_reason == "budget_hit"


def test_parse_without_usage_estimates_tokens():
    with pytest.warns(ApproximateTokenCountWarning):
        out = parse_response(_completion("one two three", usage=False), _req())
    assert out.approximate_tokens and out.tokens_generated == 4


def test_parse_malformed():
    with pytest.raises(FatalBackendError):
        parse_response({"choices": []}, _req())


def test_sends_auth_and_parses(monkeypatch):
    monkeypatch.setenv("TT_KEY", "sekret")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=_completion())

    cfg = EndpointConfig(base_url="http://llm.test/v1/", model="m", api_key_env="TT_KEY")
    out = _backend(handler, cfg).generate(_req())
    assert seen["auth"] == "Bearer sekret"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["body"]["model"] == "m"
    assert out.text == "#### 4" and out.retries == 0


@pytest.mark.parametrize("failure", [429, 500, 503, "timeout", "connect"])
def test_retries_then_succeeds(failure):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            if failure == "timeout":
                raise httpx.ReadTimeout("slow", request=request)
            if failure == "connect":
                raise httpx.ConnectError("refused", request=request)
            return httpx.Response(failure, text="busy")
        return httpx.Response(200, json=_completion())

    sleeps = []
    out = _backend(handler, sleeps=sleeps).generate(_req())
    assert out.retries == 2 and len(calls) == 3
    assert sleeps == [0.1, 0.2]


def test_gives_up_with_retryable_error():
    be = _backend(lambda r: httpx.Response(502))
    with pytest.raises(RetryableBackendError) as ei:
        be.generate(_req())
    assert ei.value.retryable and ei.value.question_id == "q1" and "HTTP 502" in str(ei.value)


@pytest.mark.parametrize("status", [400, 401, 404, 422])
def test_client_errors_are_fatal(status):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(status, text="nope")

    with pytest.raises(FatalBackendError):
        _backend(handler).generate(_req())
    assert len(calls) == 1


def test_non_json_is_fatal():
    with pytest.raises(FatalBackendError, match="not JSON"):
        _backend(lambda r: httpx.Response(200, text="<html>")).generate(_req())


def test_backoff_is_capped():
    cfg = EndpointConfig(base_url="http://x", model="m", backoff_base=1.0, backoff_max=3.0, max_retries=4)
    be = _backend(lambda r: httpx.Response(200, json=_completion()), cfg)
    assert [be._backoff(i) for i in range(4)] == [1.0, 2.0, 3.0, 3.0]


def test_concurrency_is_bounded():
    cfg = EndpointConfig(base_url="http://x", model="m", max_in_flight=3)
    gate = threading.Lock()
    active = [0, 0]

    def handler(request):
        with gate:
            active[0] += 1
            active[1] = max(active[1], active[0])
        time.sleep(0.02)
        with gate:
            active[0] -= 1
        return httpx.Response(200, json=_completion())

    be = _backend(handler, cfg)
    threads = [threading.Thread(target=be.generate, args=(_req(question_id=f"q{i}"),)) for i in range(12)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert active[1] <= 3 and be.peak_in_flight <= 3
    assert be.in_flight == 0


def test_remote_generate_helper():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json=_completion())))
    assert remote_generate(_req(), CFG, client=client).tokens_generated == 12


def test_endpoint_config_roundtrip():
    cfg = EndpointConfig(base_url="http://x", model="m", extra_body={"top_p": 0.9})
    assert EndpointConfig.from_dict(cfg.to_dict()) == cfg
    assert build_payload(_req(), cfg)["top_p"] == 0.9
    with pytest.raises(ValueError):
        EndpointConfig(base_url="http://x", model="m", mode_toggle="flag")
