import json

import pytest

from ideanov.errors import GatewayError, TemplateError
from ideanov.gateway import (ChatGateway, ChatRequest, EchoBackend,
                             FlakyBackend, OfflinePipelineBackend,
                             RuleBasedJudgeBackend, ScriptedBackend,
                             TranscriptReplayBackend, TransientBackendError,
                             render_template)
from ideanov.prompts import build_messages


def req(user="hello", system="sys"):
    return ChatRequest(messages=(
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ))


def test_render_template_substitutes():
    assert render_template("a {x} b {y}", {"x": "1", "y": "2"}) == "a 1 b 2"


def test_render_template_unbound_placeholder():
    with pytest.raises(TemplateError):
        render_template("a {x}", {})


def test_render_template_rejects_placeholder_in_binding():
    with pytest.raises(TemplateError):
        render_template("a {x}", {"x": "{y}"})


def test_request_rejects_bad_role_and_empty_content():
    with pytest.raises(TemplateError):
        ChatRequest(messages=({"role": "assistant", "content": "x"},))
    with pytest.raises(TemplateError):
        ChatRequest(messages=({"role": "user", "content": ""},))


def test_content_key_stable_and_sensitive():
    a, b = req("same"), req("same")
    assert a.content_key() == b.content_key()
    assert a.content_key() != req("different").content_key()


def test_echo_backend():
    gw = ChatGateway(EchoBackend())
    assert gw.chat(req("ping")).content == "ping"


def test_scripted_backend_serves_in_order_then_exhausts():
    backend = ScriptedBackend(["one", "two"])
    gw = ChatGateway(backend)
    assert gw.chat(req()).content == "one"
    assert gw.chat(req()).content == "two"
    with pytest.raises(GatewayError):
        gw.chat(req())
    assert len(backend.requests) == 3


def test_retry_then_success():
    backend = FlakyBackend(failures=2, inner=EchoBackend())
    gw = ChatGateway(backend, max_attempts=3, backoff_base_s=0.001)
    assert gw.chat(req("ok")).content == "ok"
    assert gw.retry_count == 2


def test_retries_exhausted_raise_gateway_error():
    backend = FlakyBackend(failures=5, inner=EchoBackend())
    gw = ChatGateway(backend, max_attempts=3, backoff_base_s=0.001)
    with pytest.raises(GatewayError):
        gw.chat(req())


def test_transient_error_is_gateway_error():
    assert issubclass(TransientBackendError, GatewayError)


def test_transcript_written_and_replayable(tmp_path):
    path = tmp_path / "transcript.jsonl"
    gw = ChatGateway(EchoBackend(), transcript_path=path, run_id="t1")
    gw.chat(req("alpha"))
    gw.chat(req("beta"))
    entries = [json.loads(l) for l in path.read_text().splitlines()]
    assert [e["seq"] for e in entries] == [1, 2]
    assert entries[0]["run_id"] == "t1"
    assert entries[0]["response"]["content"] == "alpha"

    replay = ChatGateway(TranscriptReplayBackend(path))
    assert replay.chat(req("beta")).content == "beta"
    assert replay.chat(req("alpha")).content == "alpha"
    with pytest.raises(GatewayError):
        replay.chat(req("gamma"))


def test_transcript_replay_preserves_duplicate_order(tmp_path):
    path = tmp_path / "transcript.jsonl"
    gw = ChatGateway(ScriptedBackend(["first", "second"]), transcript_path=path)
    gw.chat(req("same"))
    gw.chat(req("same"))
    replay = TranscriptReplayBackend(path)
    assert replay.complete(req("same")) == "first"
    assert replay.complete(req("same")) == "second"


def scoring_req(query, candidates):
    numbered = "\n".join(f"{i}. {c}" for i, c in enumerate(candidates, 1))
    return ChatRequest(messages=build_messages(
        "novelty_scoring", {"query": query, "candidates": numbered}))


def test_judge_scores_exact_match_zero():
    judge = RuleBasedJudgeBackend()
    out = judge.complete(scoring_req("idea one", ["idea one", "other idea"]))
    assert out == "[0.0, 1.0]"


def test_judge_ignores_whitespace_differences():
    judge = RuleBasedJudgeBackend()
    out = judge.complete(scoring_req("idea  one", ["idea one"]))
    assert out == "[0.0]"


def test_judge_configurable_scores():
    judge = RuleBasedJudgeBackend(match_score=0.3, default_score=0.7)
    out = judge.complete(scoring_req("x", ["x", "y"]))
    assert out == "[0.3, 0.7]"


def test_judge_rejects_non_scoring_prompt():
    with pytest.raises(GatewayError):
        RuleBasedJudgeBackend().complete(req("not a scoring prompt"))


def test_offline_backend_extraction():
    backend = OfflinePipelineBackend()
    messages = build_messages("extract_marketing", {
        "title": "T", "abstract": "First claim here. Second sentence."})
    out = backend.complete(ChatRequest(messages=messages))
    assert out == "Hypothesis: [First claim here.]#"


def test_offline_backend_extraction_none_sentinel():
    backend = OfflinePipelineBackend()
    messages = build_messages("extract_nlp", {
        "title": "T", "abstract": "NO HYPOTHESIS in this abstract."})
    assert backend.complete(ChatRequest(messages=messages)) == "Hypothesis: None"


@pytest.mark.parametrize("name,bindings,k", [
    ("synthesize_rephrased", {"k": "3", "idea": "base idea"}, 3),
    ("synthesize_partial", {"k": "2", "idea": "base idea"}, 2),
    ("synthesize_incremental",
     {"k": "2", "idea_a": "idea a", "idea_b": "idea b"}, 2),
])
def test_offline_backend_synthesis_counts(name, bindings, k):
    backend = OfflinePipelineBackend()
    out = backend.complete(ChatRequest(messages=build_messages(name, bindings)))
    lines = out.splitlines()
    assert len(lines) == k
    assert all(line.startswith(f"{i}. ") for i, line in enumerate(lines, 1))
    # deterministic: same request, same reply
    assert backend.complete(
        ChatRequest(messages=build_messages(name, bindings))) == out


def test_offline_backend_scoring_delegates_to_judge():
    backend = OfflinePipelineBackend()
    out = backend.complete(scoring_req("q idea", ["q idea", "r idea"]))
    assert out == "[0.0, 1.0]"


def test_offline_backend_rejects_unknown_prompt():
    with pytest.raises(GatewayError):
        OfflinePipelineBackend().complete(req("unrecognizable"))
