import datetime as dt
import shutil
from pathlib import Path

import pytest

from ideanov.corpus import PaperRecord
from ideanov.pipeline import RunConfig, run_all

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures" / "demo"


def make_paper(pid, refs=(), is_seed=False, year=2020, title=None,
               abstract=None, domain="marketing", dated=True):
    return PaperRecord(
        id=pid,
        title=title if title is not None else f"Title of {pid}",
        abstract=abstract if abstract is not None else
        f"Claim of {pid} holds. Details follow.",
        venue="Test Venue",
        publication_date=dt.date(year, 6, 15) if dated else None,
        reference_ids=tuple(refs),
        is_seed=is_seed,
        domain=domain,
    )


@pytest.fixture(scope="session")
def demo_run(tmp_path_factory):
    """One full mock pipeline run over the bundled fixture, shared read-only."""
    root = tmp_path_factory.mktemp("demo-run")
    for name in ("seeds.jsonl", "references.jsonl", "run.toml"):
        shutil.copy(FIXTURE_DIR / name, root / name)
    cfg = RunConfig.from_toml(root / "run.toml")
    run_all(cfg)
    return cfg
