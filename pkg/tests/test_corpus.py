import datetime as dt

import pytest

from conftest import make_paper
from ideanov.corpus import (Corpus, FetchProvenance, PaperRecord,
                            build_closure_corpus, corpus_stats,
                            filter_candidates_by_date, load_corpus,
                            load_records, save_corpus, save_records,
                            verify_closure)
from ideanov.errors import NotFoundError, ValidationError
from ideanov.fetchers import JsonlFetcher


class DictFetcher:
    source_name = "dict"

    def __init__(self, records):
        self.records = {r.id: r for r in records}

    def fetch_many(self, ids):
        return {i: self.records.get(i) for i in ids}


def test_record_rejects_duplicate_refs():
    with pytest.raises(ValidationError):
        make_paper("p1", refs=["a", "a"])


def test_record_rejects_self_reference():
    with pytest.raises(ValidationError):
        make_paper("p1", refs=["p1"])


def test_record_rejects_unknown_domain():
    with pytest.raises(ValidationError):
        make_paper("p1", domain="astral")


def test_record_json_round_trip():
    rec = make_paper("p1", refs=["a", "b"], is_seed=True)
    assert PaperRecord.from_json(rec.to_json()) == rec
    undated = make_paper("p2", dated=False)
    assert PaperRecord.from_json(undated.to_json()) == undated


def test_build_resolves_references():
    refs = [make_paper("r1"), make_paper("r2")]
    seeds = [make_paper("s1", refs=["r1", "r2"], is_seed=True)]
    corpus = build_closure_corpus(seeds, DictFetcher(refs))
    assert set(corpus.references) == {"r1", "r2"}
    assert verify_closure(corpus) == []
    assert verify_closure(corpus, strict=True) == []


def test_build_requires_seed_flag_and_date():
    with pytest.raises(ValidationError):
        build_closure_corpus([make_paper("s1")], DictFetcher([]))
    with pytest.raises(ValidationError):
        build_closure_corpus([make_paper("s1", is_seed=True, dated=False)],
                             DictFetcher([]))


def test_build_rejects_duplicate_seeds():
    s = make_paper("s1", is_seed=True)
    with pytest.raises(ValidationError):
        build_closure_corpus([s, s], DictFetcher([]))


def test_seed_cited_by_seed_stays_in_seed_set():
    seeds = [make_paper("s1", refs=["s2", "r1"], is_seed=True),
             make_paper("s2", is_seed=True)]
    corpus = build_closure_corpus(seeds, DictFetcher([make_paper("r1")]))
    assert "s2" in corpus.seeds and "s2" not in corpus.references
    assert corpus.provenance.overlap_removed == 1
    assert corpus.provenance.raw_reference_count == 2
    assert corpus.provenance.deduplicated_reference_count == 1


def test_unresolved_reference_kept_and_recorded():
    seeds = [make_paper("s1", refs=["r1", "ghost"], is_seed=True)]
    corpus = build_closure_corpus(seeds, DictFetcher([make_paper("r1")]))
    assert corpus.provenance.unresolved_ids == ("ghost",)
    assert corpus.seeds["s1"].reference_ids == ("r1", "ghost")
    # known-missing passes the default audit but fails the strict one
    assert verify_closure(corpus) == []
    assert verify_closure(corpus, strict=True) == [("s1", "ghost")]


def test_fetched_seed_copy_demoted_to_reference():
    ref = make_paper("r1", is_seed=True)  # fetcher returns it flagged as seed
    seeds = [make_paper("s1", refs=["r1"], is_seed=True)]
    corpus = build_closure_corpus(seeds, DictFetcher([ref]))
    assert corpus.references["r1"].is_seed is False


def test_corpus_rejects_seed_reference_id_overlap():
    with pytest.raises(ValidationError):
        Corpus(seeds={"x": make_paper("x", is_seed=True)},
               references={"x": make_paper("x")},
               provenance=FetchProvenance(source="t", fetched_at=""))


def test_date_filter_boundary_inclusive():
    seeds = [make_paper("s1", refs=["r1", "r2", "r3"], is_seed=True, year=2020)]
    refs = [make_paper("r1", year=2019),
            make_paper("r2"),      # same date as the seed: kept
            make_paper("r3", year=2021)]
    corpus = build_closure_corpus(seeds, DictFetcher(refs))
    pool = {r.id for r in filter_candidates_by_date(corpus, "s1")}
    assert pool == {"r1", "r2"}


def test_date_filter_excludes_undated_and_warns(caplog):
    seeds = [make_paper("s1", refs=["r1", "r2"], is_seed=True)]
    refs = [make_paper("r1", year=2019), make_paper("r2", dated=False)]
    corpus = build_closure_corpus(seeds, DictFetcher(refs))
    with caplog.at_level("WARNING"):
        pool = {r.id for r in filter_candidates_by_date(corpus, "s1")}
    assert pool == {"r1"}
    assert "undated" in caplog.text


def test_date_filter_unknown_seed():
    corpus = build_closure_corpus([make_paper("s1", is_seed=True)],
                                  DictFetcher([]))
    with pytest.raises(NotFoundError):
        filter_candidates_by_date(corpus, "nope")


def test_stats_counts_and_histogram():
    seeds = [make_paper("s1", refs=["r1", "r2", "ghost"], is_seed=True,
                        year=2020)]
    refs = [make_paper("r1", year=2019), make_paper("r2", dated=False)]
    corpus = build_closure_corpus(seeds, DictFetcher(refs))
    stats = corpus_stats(corpus)
    assert stats["seeds"] == 1
    assert stats["references"] == 2
    assert stats["unresolved_references"] == 1
    assert stats["undated_records"] == 1
    assert stats["date_histogram"] == {"2019": 1, "2020": 1}


def test_save_load_round_trip(tmp_path):
    seeds = [make_paper("s1", refs=["r1", "ghost"], is_seed=True)]
    corpus = build_closure_corpus(seeds, DictFetcher([make_paper("r1")]))
    path = tmp_path / "corpus.jsonl"
    save_corpus(corpus, path)
    loaded = load_corpus(path)
    assert loaded.seeds == corpus.seeds
    assert loaded.references == corpus.references
    assert loaded.provenance.unresolved_ids == ("ghost",)


def test_records_round_trip_and_jsonl_fetcher(tmp_path):
    records = [make_paper("a"), make_paper("b", dated=False)]
    path = tmp_path / "refs.jsonl"
    save_records(records, path)
    assert load_records(path) == records
    fetched = JsonlFetcher(path).fetch_many(["a", "zzz"])
    assert fetched["a"] == records[0]
    assert fetched["zzz"] is None


def test_get_raises_for_unknown_id():
    corpus = build_closure_corpus([make_paper("s1", is_seed=True)],
                                  DictFetcher([]))
    assert corpus.get("s1").id == "s1"
    with pytest.raises(NotFoundError):
        corpus.get("nope")
