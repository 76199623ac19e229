import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ideanov.embedding import (EmbeddingCache, EmbeddingVector,
                               HashEmbeddingClient, cache_key, cosine,
                               embed_text, embed_texts, normalize_text)
from ideanov.errors import DomainError, ValidationError

# cos((1,1),(1,0)) = 1/sqrt(2), frozen
COS_45 = 0.7071067811865475


def vec(*values):
    return EmbeddingVector(values=tuple(values), dim=len(values))


def test_vector_invariants():
    with pytest.raises(ValidationError):
        EmbeddingVector(values=(1.0,), dim=2)
    with pytest.raises(ValidationError):
        EmbeddingVector(values=(float("nan"),), dim=1)
    with pytest.raises(ValidationError):
        EmbeddingVector(values=(1.0,), dim=1, source="weird")


def test_from_array_round_trip():
    arr = np.array([1.5, -2.0, 0.25])
    v = EmbeddingVector.from_array(arr)
    assert v.dim == 3
    assert np.array_equal(v.array, arr)


def test_normalize_text_collapses_whitespace_preserves_case():
    assert normalize_text("  A  B\t\nC  ") == "A B C"
    assert normalize_text("MiXeD") == "MiXeD"


def test_cosine_oracle_45_degrees():
    assert cosine(vec(1.0, 1.0), vec(1.0, 0.0)) == pytest.approx(
        COS_45, abs=1e-15)


def test_cosine_bounds_and_errors():
    assert cosine(vec(1.0, 0.0), vec(1.0, 0.0)) == pytest.approx(1.0)
    assert cosine(vec(1.0, 0.0), vec(-1.0, 0.0)) == pytest.approx(-1.0)
    with pytest.raises(ValidationError):
        cosine(vec(1.0), vec(1.0, 0.0))
    with pytest.raises(DomainError):
        cosine(vec(0.0, 0.0), vec(1.0, 0.0))


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=8))
def test_cosine_clipped_to_unit_interval(values):
    v = vec(*values)
    if float(np.linalg.norm(v.array)) == 0.0:
        return
    assert -1.0 <= cosine(v, v) <= 1.0
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-9)


def test_cache_key_ignores_whitespace_not_case():
    assert cache_key("m", "a  b") == cache_key("m", "a b")
    assert cache_key("m", "a b") != cache_key("m", "A b")
    assert cache_key("m1", "a") != cache_key("m2", "a")


def test_hash_client_deterministic():
    client = HashEmbeddingClient(dim=16)
    a, b = client.embed_batch(["same text", "same  text"])
    assert a.values == b.values
    (c,) = client.embed_batch(["other text"])
    assert a.values != c.values
    assert a.dim == 16


def test_cache_persists_across_reopen(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = EmbeddingCache(path)
    cache.put("k1", vec(1.0, 2.0))
    cache.put("k1", vec(9.0, 9.0))  # duplicate put ignored
    reopened = EmbeddingCache(path)
    assert len(reopened) == 1
    assert reopened.get("k1").values == (1.0, 2.0)
    assert reopened.get("missing") is None


def test_embed_texts_only_misses_reach_client(tmp_path):
    client = HashEmbeddingClient(dim=8)
    cache = EmbeddingCache(tmp_path / "cache.jsonl")
    first = embed_texts(["alpha", "beta"], client, cache)
    assert client.calls == 1
    again = embed_texts(["beta", "alpha", "gamma"], client, cache)
    assert client.calls == 2  # only gamma is new
    assert again[0].values == first[1].values
    assert again[1].values == first[0].values


def test_embed_text_caches_normalized_form(tmp_path):
    client = HashEmbeddingClient(dim=8)
    cache = EmbeddingCache(tmp_path / "cache.jsonl")
    a = embed_text("padded   text", client, cache)
    b = embed_text(" padded text ", client, cache)
    assert a.values == b.values
    assert client.calls == 1


def test_embed_rejects_empty_text(tmp_path):
    client = HashEmbeddingClient(dim=8)
    cache = EmbeddingCache(tmp_path / "cache.jsonl")
    with pytest.raises(ValidationError):
        embed_text("   ", client, cache)


class FixedClient:
    """Returns preset vectors; counts chunked calls."""

    def __init__(self, dim, chunk_size):
        self.model = "fixed"
        self.dim = dim
        self.chunk_size = chunk_size
        self.batches = []

    def embed_batch(self, texts):
        out = []
        for start in range(0, len(texts), self.chunk_size):
            chunk = texts[start:start + self.chunk_size]
            self.batches.append(list(chunk))
            out.extend(EmbeddingVector(values=(float(len(t)),) * self.dim,
                                       dim=self.dim) for t in chunk)
        return out


def test_chunking_preserves_order(tmp_path):
    client = FixedClient(dim=2, chunk_size=2)
    cache = EmbeddingCache(tmp_path / "cache.jsonl")
    texts = ["a", "bb", "ccc", "dddd", "eeeee"]
    out = embed_texts(texts, client, cache)
    assert [v.values[0] for v in out] == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert [len(b) for b in client.batches] == [2, 2, 1]


def test_dim_mismatch_from_client_rejected(tmp_path):
    class WrongDim:
        model = "wrong"
        dim = 4

        def embed_batch(self, texts):
            return [EmbeddingVector(values=(1.0, 2.0), dim=2) for _ in texts]

    cache = EmbeddingCache(tmp_path / "cache.jsonl")
    with pytest.raises(ValidationError):
        embed_text("x", WrongDim(), cache)
