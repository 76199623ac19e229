import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ideanov.dtree import NON_NOVEL, NOVEL, train_decision_tree
from ideanov.errors import ScoringError, ValidationError
from ideanov.gateway import ChatGateway, RuleBasedJudgeBackend, ScriptedBackend
from ideanov.ideagen import Idea
from ideanov.novelty import (PAD_CANDIDATE_ID, PAD_SCORE, RUBRIC_LEVELS,
                             ScoreVector, check_novelty,
                             classification_metrics, format_score_list,
                             load_score_dataset, pad_score_vector,
                             parse_score_list, save_score_dataset,
                             score_novelty, snap_score)
from ideanov.retriever import ProjectionHead, build_index


def idea(pid, text):
    return Idea(paper_id=pid, text=text)


def test_snap_exact_levels_pass_through():
    for level in RUBRIC_LEVELS:
        assert snap_score(level) == level


def test_snap_within_tolerance():
    assert snap_score(0.32) == 0.3
    assert snap_score(0.28) == 0.3
    assert snap_score(0.05) == 0.0
    assert snap_score(0.95) == 1.0
    assert snap_score(0.75) == 0.7  # exact tie snaps to the lower level


def test_snap_rejects_off_rubric():
    with pytest.raises(ScoringError):
        snap_score(0.4)
    with pytest.raises(ScoringError):
        snap_score(0.62)
    with pytest.raises(ScoringError):
        snap_score(-0.2)


def test_parse_score_list_exact_vector():
    text = "[0.3, 0.5, 0.3, 0.7, 1.0]"
    assert parse_score_list(text, 5) == [0.3, 0.5, 0.3, 0.7, 1.0]


def test_parse_score_list_embedded_and_snapped():
    text = "Here are my scores: [0.32, 0.68] as requested."
    assert parse_score_list(text, 2) == [0.3, 0.7]


def test_parse_score_list_skips_non_numeric_brackets():
    text = "[these are words] then [0.0, 1.0]"
    assert parse_score_list(text, 2) == [0.0, 1.0]


def test_parse_score_list_errors():
    with pytest.raises(ScoringError):
        parse_score_list("no list here", 2)
    with pytest.raises(ScoringError):
        parse_score_list("[0.0, 1.0]", 3)
    with pytest.raises(ScoringError):
        parse_score_list("[0.4, 1.0]", 2)
    with pytest.raises(ValidationError):
        parse_score_list("[0.0]", 0)


@given(st.lists(st.sampled_from(RUBRIC_LEVELS), min_size=1, max_size=50))
def test_format_parse_round_trip(scores):
    assert parse_score_list(format_score_list(scores), len(scores)) == scores


def test_score_vector_invariants():
    ScoreVector(query_id="q", candidate_ids=("a",), scores=(0.3,))
    with pytest.raises(ValidationError):
        ScoreVector(query_id="q", candidate_ids=("a",), scores=(0.3, 0.7))
    with pytest.raises(ValidationError):
        ScoreVector(query_id="q", candidate_ids=("a",), scores=(0.4,))


def test_score_novelty_happy_path():
    gw = ChatGateway(RuleBasedJudgeBackend())
    out = score_novelty(idea("q", "the query idea"),
                        [idea("c1", "the query idea"), idea("c2", "another")],
                        gw)
    assert out.query_id == "q"
    assert out.candidate_ids == ("c1", "c2")
    assert out.scores == (0.0, 1.0)
    assert out.padded is False


def test_score_novelty_reprompts_once_on_parse_failure(caplog):
    backend = ScriptedBackend(["not a score list", "[0.3, 0.7]"])
    gw = ChatGateway(backend)
    with caplog.at_level("WARNING"):
        out = score_novelty(idea("q", "x"), [idea("c1", "a"), idea("c2", "b")],
                            gw)
    assert out.scores == (0.3, 0.7)
    assert len(backend.requests) == 2
    assert "Reminder" in backend.requests[1].messages[1]["content"]


def test_score_novelty_second_failure_raises():
    gw = ChatGateway(ScriptedBackend(["bad", "still bad"]))
    with pytest.raises(ScoringError):
        score_novelty(idea("q", "x"), [idea("c1", "a")], gw)


def test_score_novelty_candidate_count_bounds():
    gw = ChatGateway(RuleBasedJudgeBackend())
    with pytest.raises(ValidationError):
        score_novelty(idea("q", "x"), [], gw)
    many = [idea(f"c{i}", f"t{i}") for i in range(51)]
    with pytest.raises(ValidationError):
        score_novelty(idea("q", "x"), many, gw)


def test_pad_score_vector(caplog):
    vec = ScoreVector(query_id="q", candidate_ids=("a",), scores=(0.3,))
    with caplog.at_level("WARNING"):
        padded = pad_score_vector(vec, 3)
    assert padded.candidate_ids == ("a", PAD_CANDIDATE_ID, PAD_CANDIDATE_ID)
    assert padded.scores == (0.3, PAD_SCORE, PAD_SCORE)
    assert padded.padded is True
    assert pad_score_vector(vec, 1) is vec


def make_check_setup():
    ideas = {pid: idea(pid, text) for pid, text in [
        ("known", "an established claim"),
        ("other", "a different claim"),
    ]}
    emb = {
        "known": np.array([1.0, 0.0]),
        "other": np.array([0.0, 1.0]),
    }
    from ideanov.embedding import EmbeddingVector
    emb = {k: EmbeddingVector.from_array(v) for k, v in emb.items()}
    index = build_index(list(ideas.values()), ProjectionHead.identity(2), emb)
    tree = train_decision_tree(
        [([0.0, 1.0], NON_NOVEL), ([0.0, 1.0], NON_NOVEL),
         ([1.0, 1.0], NOVEL), ([1.0, 1.0], NOVEL)])
    return ideas, emb, index, tree


def test_check_novelty_duplicate_is_non_novel():
    ideas, emb, index, tree = make_check_setup()
    gw = ChatGateway(RuleBasedJudgeBackend())

    from ideanov.embedding import EmbeddingVector

    def embed_fn(text):
        for pid, it in ideas.items():
            if it.text == text:
                return emb[pid]
        return EmbeddingVector.from_array(np.array([1.0, 1.0]))

    verdict = check_novelty(idea("probe", "an established claim"), index,
                            ProjectionHead.identity(2), 2, gw, embed_fn, ideas,
                            tree)
    assert verdict["label"] == NON_NOVEL
    assert verdict["query_id"] == "probe"
    assert verdict["scores"] == [0.0, 1.0]
    assert set(verdict["candidate_ids"]) == {"known", "other"}
    assert verdict["tree_path"][-1] == "leaf:NonNovel"


def test_check_novelty_fresh_is_novel_with_padding():
    ideas, emb, index, tree = make_check_setup()
    gw = ChatGateway(RuleBasedJudgeBackend())

    from ideanov.embedding import EmbeddingVector

    def embed_fn(text):
        return EmbeddingVector.from_array(np.array([1.0, 1.0]))

    verdict = check_novelty(idea("probe", "something new"), index,
                            ProjectionHead.identity(2), 2, gw, embed_fn, ideas,
                            tree, pool={"known"})
    assert verdict["label"] == NOVEL
    # pool of one candidate: the second slot is a pad
    assert verdict["candidate_ids"][1] == PAD_CANDIDATE_ID
    assert verdict["scores"] == [1.0, 1.0]


def test_classification_metrics_perfect():
    out = classification_metrics([NOVEL, NON_NOVEL], [NOVEL, NON_NOVEL])
    assert out["accuracy"] == 1.0
    assert out["precision"] == 1.0
    assert out["recall"] == 1.0
    assert out["f1"] == 1.0
    assert out["macro"]["f1"] == 1.0
    assert out["per_class"][NOVEL]["support"] == 1


def test_classification_metrics_known_confusion():
    preds = [NOVEL, NOVEL, NON_NOVEL, NON_NOVEL]
    truth = [NOVEL, NON_NOVEL, NON_NOVEL, NON_NOVEL]
    out = classification_metrics(preds, truth)
    assert out["accuracy"] == pytest.approx(0.75)
    # weighted recall always equals accuracy
    assert out["recall"] == pytest.approx(out["accuracy"], abs=1e-15)
    assert out["per_class"][NOVEL]["precision"] == pytest.approx(0.5)
    assert out["per_class"][NOVEL]["recall"] == pytest.approx(1.0)
    assert out["per_class"][NON_NOVEL]["recall"] == pytest.approx(2.0 / 3.0)


def test_classification_metrics_single_class_truth():
    out = classification_metrics([NOVEL, NOVEL], [NOVEL, NOVEL])
    assert out["per_class"][NON_NOVEL]["support"] == 0
    assert out["accuracy"] == 1.0
    assert out["recall"] == 1.0


def test_classification_metrics_validation():
    with pytest.raises(ValidationError):
        classification_metrics([NOVEL], [])
    with pytest.raises(ValidationError):
        classification_metrics([NOVEL], [NOVEL, NOVEL])
    with pytest.raises(ValidationError):
        classification_metrics(["Weird"], [NOVEL])


def test_score_dataset_round_trip(tmp_path):
    rows = [
        (ScoreVector(query_id="q1", candidate_ids=("a", "b"),
                     scores=(0.0, 0.7)), NON_NOVEL),
        (ScoreVector(query_id="q2", candidate_ids=("c", PAD_CANDIDATE_ID),
                     scores=(1.0, 1.0), padded=True), NOVEL),
    ]
    save_score_dataset(rows, tmp_path / "scores.jsonl")
    assert load_score_dataset(tmp_path / "scores.jsonl") == rows
