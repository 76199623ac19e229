import pytest
from fastapi.testclient import TestClient

from ideanov.service import create_app


@pytest.fixture(scope="module")
def client(demo_run):
    return TestClient(create_app(demo_run))


def test_health(client, demo_run):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["domain"] == "marketing"
    assert body["indexed_ideas"] > 0


def test_corpus_stats(client):
    resp = client.get("/corpus/stats")
    assert resp.status_code == 200
    body = resp.json()
    assert body["seeds"] == 20
    assert body["references"] > 0
    assert body["overlap_removed"] == 1


def test_retrieve_returns_ranked_candidates(client):
    resp = client.post("/retrieve", json={"text": "loyalty program churn", "k": 5})
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["candidates"]) == 5
    scores = [c["score"] for c in body["candidates"]]
    assert scores == sorted(scores, reverse=True)
    assert all(c["text"] for c in body["candidates"])


def test_retrieve_duplicate_text_hits_its_source(client, demo_run):
    from ideanov.ideagen import load_ideas

    ideas = load_ideas(demo_run.artifact_path("ideas"))
    known = next(i for i in ideas if i.status == "extracted")
    resp = client.post("/retrieve", json={"text": known.text, "k": 1})
    assert resp.status_code == 200
    top = resp.json()["candidates"][0]
    assert top["id"] == known.paper_id
    assert top["score"] == pytest.approx(1.0)


def test_retrieve_validates_body(client):
    assert client.post("/retrieve", json={"text": ""}).status_code == 422
    assert client.post("/retrieve",
                       json={"text": "x", "k": 0}).status_code == 422


def test_novelty_check_duplicate_non_novel(client, demo_run):
    from ideanov.ideagen import load_ideas

    ideas = load_ideas(demo_run.artifact_path("ideas"))
    known = next(i for i in ideas if i.status == "extracted")
    resp = client.post("/novelty/check",
                       json={"text": known.text, "query_id": "dup-probe"})
    assert resp.status_code == 200
    body = resp.json()
    assert body["label"] == "NonNovel"
    assert body["query_id"] == "dup-probe"
    assert 0.0 in body["scores"]
    assert body["tree_path"][-1] == "leaf:NonNovel"


def test_novelty_check_fresh_novel(client):
    resp = client.post("/novelty/check",
                       json={"text": "A completely unprecedented scheme."})
    assert resp.status_code == 200
    body = resp.json()
    assert body["label"] == "Novel"
    assert all(s == 1.0 for s in body["scores"])


def test_novelty_check_k_must_match_tree(client):
    resp = client.post("/novelty/check", json={"text": "x", "k": 3})
    assert resp.status_code == 422
