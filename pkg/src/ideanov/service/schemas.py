"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str = "ok"
    domain: str
    indexed_ideas: int


class CorpusStatsResponse(BaseModel):
    seeds: int
    references: int
    overlap_removed: int
    unresolved_references: int
    raw_reference_count: int
    deduplicated_reference_count: int
    undated_records: int
    date_histogram: dict[str, int]


class RetrieveRequest(BaseModel):
    text: str = Field(min_length=1, description="Idea text to search with")
    k: int = Field(default=10, ge=1, le=100)


class RetrievedCandidate(BaseModel):
    id: str
    score: float
    text: str


class RetrieveResponse(BaseModel):
    candidates: list[RetrievedCandidate]


class NoveltyCheckRequest(BaseModel):
    text: str = Field(min_length=1, description="Idea text to classify")
    query_id: str = Field(default="query", min_length=1)
    k: int | None = Field(default=None, ge=1, le=100,
                          description="Override the configured K")


class NoveltyCheckResponse(BaseModel):
    query_id: str
    candidate_ids: list[str]
    scores: list[float]
    label: str
    tree_path: list[str]
