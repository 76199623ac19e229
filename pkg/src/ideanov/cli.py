"""Command-line interface.

Pipeline stages run locally against a TOML config; `serve` exposes the
trained artifacts over HTTP and `check` is a thin client for a running
server. Exit codes: 0 success, 2 validation/config error, 3 gateway error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys

import click

from .errors import GatewayError, ValidationError
from .pipeline import STAGES, RunConfig, run_all, run_stage

EXIT_VALIDATION = 2
EXIT_GATEWAY = 3


def _load_config(config, seed, k, mock) -> RunConfig:
    return RunConfig.from_toml(config, seed=seed, k=k, mock=mock or None)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except GatewayError as exc:
            click.echo(f"gateway error: {exc}", err=True)
            sys.exit(EXIT_GATEWAY)
    return wrapper


def _stage_options(fn):
    fn = click.option("--config", "config", required=True,
                      type=click.Path(), help="Run configuration TOML.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override rng_seed.")(fn)
    fn = click.option("--k", type=int, default=None,
                      help="Override retrieval K.")(fn)
    fn = click.option("--mock", is_flag=True, default=False,
                      help="Force offline mock backends.")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, default=False)
def main(verbose):
    """Scientific idea novelty detection pipeline."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")


def _make_stage_command(stage_name: str):
    @main.command(name=stage_name,
                  help=f"Run the '{stage_name}' pipeline stage.")
    @_stage_options
    @_guarded
    def _cmd(config, seed, k, mock, _stage=stage_name):
        cfg = _load_config(config, seed, k, mock)
        entry = run_stage(_stage, cfg)
        state = "cache hit" if entry["cache_hit"] else "done"
        click.echo(f"{_stage}: {state} ({entry['duration_s']}s)")
    return _cmd


for _name in STAGES:
    _make_stage_command(_name)


@main.command(name="all", help="Run every stage in order.")
@_stage_options
@_guarded
def run_all_cmd(config, seed, k, mock):
    cfg = _load_config(config, seed, k, mock)
    for entry in run_all(cfg):
        state = "cache hit" if entry["cache_hit"] else "done"
        click.echo(f"{entry['stage']}: {state} ({entry['duration_s']}s)")
    click.echo(f"report: {cfg.artifact_path('report_md')}")


@main.command(help="Serve trained artifacts over HTTP.")
@_stage_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@_guarded
def serve(config, seed, k, mock, host, port):
    import uvicorn

    from .service import create_app

    cfg = _load_config(config, seed, k, mock)
    app = create_app(cfg)
    uvicorn.run(app, host=host, port=port)


@main.command(help="Query a running server for a novelty verdict.")
@click.option("--server", required=True, help="Server base URL.")
@click.option("--text", required=True, help="Idea text to classify.")
@click.option("--query-id", default="query", show_default=True)
@_guarded
def check(server, text, query_id):
    import httpx

    try:
        resp = httpx.post(f"{server.rstrip('/')}/novelty/check",
                          json={"text": text, "query_id": query_id},
                          timeout=120.0)
    except httpx.HTTPError as exc:
        raise GatewayError(f"server unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise GatewayError(f"server status {resp.status_code}: {resp.text[:200]}")
    click.echo(json.dumps(resp.json(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
