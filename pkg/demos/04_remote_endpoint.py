"""Driving a chat-completions endpoint.

A real run points ``EndpointConfig.base_url`` at a vLLM or SGLang server. Here
an in-process fake server stands in so the demo runs offline. It answers
nothink probes with an exhausted budget, so TOWN escalates to thinking.

    python3 demos/04_remote_endpoint.py
"""

import json

import httpx

from thinktax.backend import EndpointConfig, RemoteBackend
from thinktax.orchestrator import Orchestrator, QuestionSpec, TownPolicy


def fake_server(request: httpx.Request) -> httpx.Response:
    body = json.loads(request.content)
    thinking = body["chat_template_kwargs"]["enable_thinking"]
    if thinking:
        text, finish, used = "<think>3 boxes of 4 is 12</think>\n#### 12", "stop", 40
    else:
        text, finish, used = "Let me count the", "length", body["max_tokens"]
    return httpx.Response(
        200,
        json={
            "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": finish}],
            "usage": {"prompt_tokens": 25, "completion_tokens": used},
        },
    )


cfg = EndpointConfig(base_url="http://localhost:8000/v1", model="any-model", max_in_flight=4)
backend = RemoteBackend(cfg, client=httpx.Client(transport=httpx.MockTransport(fake_server)))
orch = Orchestrator(backend, seed=0)

out = orch.run(QuestionSpec("q1", "How many eggs are in 3 boxes of 4?"), TownPolicy(64, 256))
print(f"resolution: {out.resolution}, answer: {out.final_answer.value}")
for st in out.stages:
    print(f"  {st.name:<8} mode={st.mode:<8} tokens={st.tokens_generated:<4} stop={st.stop.stop_reason}")
