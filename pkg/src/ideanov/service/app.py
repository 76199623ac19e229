"""FastAPI application serving retrieval and novelty checks.

Artifacts (corpus, ideas, head, index, tree) are loaded once at startup
from a finished pipeline run; requests then only embed the query, scan
the index, and call the scoring backend.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..errors import GatewayError, ValidationError
from ..ideagen import Idea
from ..novelty import check_novelty
from ..pipeline import LoadedArtifacts, RunConfig, load_artifacts
from ..retriever import project, top_k
from .schemas import (CorpusStatsResponse, HealthResponse, NoveltyCheckRequest,
                      NoveltyCheckResponse, RetrieveRequest, RetrievedCandidate,
                      RetrieveResponse)


def create_app(cfg: RunConfig | None = None,
               artifacts: LoadedArtifacts | None = None) -> FastAPI:
    """Build the app from a run config or pre-loaded artifacts."""
    if artifacts is None:
        if cfg is None:
            raise ValidationError("create_app needs a config or artifacts")
        artifacts = load_artifacts(cfg)
    app = FastAPI(title="idea novelty service")
    state = artifacts

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(domain=state.cfg.domain,
                              indexed_ideas=len(state.index))

    @app.get("/corpus/stats", response_model=CorpusStatsResponse)
    def stats() -> CorpusStatsResponse:
        return CorpusStatsResponse(**state.stats())

    @app.post("/retrieve", response_model=RetrieveResponse)
    def retrieve(req: RetrieveRequest) -> RetrieveResponse:
        try:
            base = state.embed(req.text)
            ranked = top_k(state.index, project(state.head, base), req.k)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except GatewayError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return RetrieveResponse(candidates=[
            RetrievedCandidate(id=cid, score=score,
                               text=state.ideas[cid].text)
            for cid, score in zip(ranked.ranked_ids, ranked.scores)])

    @app.post("/novelty/check", response_model=NoveltyCheckResponse)
    def novelty_check(req: NoveltyCheckRequest) -> NoveltyCheckResponse:
        query = Idea(paper_id=req.query_id, text=req.text)
        k = req.k or state.cfg.K
        if k != state.tree.n_features:
            raise HTTPException(
                status_code=422,
                detail=f"K={k} does not match the trained tree "
                       f"(K={state.tree.n_features})")
        try:
            verdict = check_novelty(query, state.index, state.head, k,
                                    state.gateway, state.embed, state.ideas,
                                    state.tree)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except GatewayError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return NoveltyCheckResponse(**verdict)

    return app
