"""Reference fetchers: resolve paper ids to metadata records.

Two implementations of the same contract: an HTTP client for a
scholarly-metadata endpoint (JSON records, API key from the environment)
and a file-backed mock that reads a JSONL fixture. Both expose
`fetch_many(ids) -> dict[id, PaperRecord | None]` where None marks a
paper the source does not know.
"""

from __future__ import annotations

import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import httpx

from .corpus import PaperRecord, load_records
from .errors import FetchError

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 3
BACKOFF_BASE_S = 1.0


class JsonlFetcher:
    """Fixture-backed fetcher for offline runs and tests."""

    source_name = "jsonl-fixture"

    def __init__(self, path: str | Path):
        self._records = {rec.id: rec for rec in load_records(path)}

    def fetch(self, paper_id: str) -> Optional[PaperRecord]:
        return self._records.get(paper_id)

    def fetch_many(self, ids: list[str]) -> dict[str, Optional[PaperRecord]]:
        return {paper_id: self.fetch(paper_id) for paper_id in ids}


class HttpFetcher:
    """Client for a JSON metadata endpoint, with retries and a rate limit knob.

    Expects `GET {base_url}/paper/{id}` returning a JSON object with the
    PaperRecord field names; 404 means not-found. The API key is read from
    the environment variable named by `api_key_env`.
    """

    source_name = "http"

    def __init__(self, base_url: str, api_key_env: str = "METADATA_API_KEY",
                 requests_per_second: float = 5.0, max_workers: int = 4,
                 timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self.min_interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self.max_workers = max_workers
        self._client = httpx.Client(timeout=timeout_s)
        self._last_request = 0.0

    def _headers(self) -> dict:
        return {"x-api-key": self.api_key} if self.api_key else {}

    def _throttle(self):
        wait = self._last_request + self.min_interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()

    def fetch(self, paper_id: str) -> Optional[PaperRecord]:
        last_exc: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            self._throttle()
            try:
                resp = self._client.get(f"{self.base_url}/paper/{paper_id}",
                                        headers=self._headers())
            except httpx.HTTPError as exc:
                last_exc = exc
                time.sleep(BACKOFF_BASE_S * (2 ** attempt) * (0.5 + random.random()))
                continue
            if resp.status_code == 404:
                return None
            if resp.status_code >= 500 or resp.status_code == 429:
                last_exc = FetchError(f"status {resp.status_code}", paper_id)
                time.sleep(BACKOFF_BASE_S * (2 ** attempt) * (0.5 + random.random()))
                continue
            resp.raise_for_status()
            return PaperRecord.from_json(resp.json())
        raise FetchError(f"fetch failed for {paper_id!r} after {MAX_ATTEMPTS} attempts: "
                         f"{last_exc}", paper_id)

    def fetch_many(self, ids: list[str]) -> dict[str, Optional[PaperRecord]]:
        # Bounded parallelism; the corpus reduction itself stays single-threaded.
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            results = list(pool.map(self.fetch, ids))
        return dict(zip(ids, results))
