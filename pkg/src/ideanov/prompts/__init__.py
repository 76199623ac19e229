"""Prompt template registry.

Each template ships as a text file with a system part and a user part
separated by a ``<<<USER>>>`` line. The files are load-bearing artifacts:
tests pin their content hashes so silent edits fail loudly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources

from ..errors import TemplateError
from ..gateway import render_template

_SEPARATOR = "<<<USER>>>"

TEMPLATE_NAMES = (
    "extract_nlp",
    "extract_marketing",
    "synthesize_rephrased",
    "synthesize_partial",
    "synthesize_incremental",
    "novelty_scoring",
)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str


def template_text(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise TemplateError(f"unknown template {name!r}")
    return resources.files(__package__).joinpath(f"{name}.txt").read_text("utf-8")


def template_hash(name: str) -> str:
    return hashlib.sha256(template_text(name).encode("utf-8")).hexdigest()


def load_template(name: str) -> PromptTemplate:
    raw = template_text(name)
    if f"\n{_SEPARATOR}\n" not in raw:
        raise TemplateError(f"template {name!r} lacks a {_SEPARATOR} separator")
    system, user = raw.split(f"\n{_SEPARATOR}\n", 1)
    return PromptTemplate(name=name, system=system.strip("\n"), user=user.strip("\n"))


def build_messages(name: str, bindings: dict[str, str]) -> tuple[dict, ...]:
    """Render a template into a (system, user) message pair."""
    tpl = load_template(name)
    return (
        {"role": "system", "content": render_template(tpl.system, bindings)},
        {"role": "user", "content": render_template(tpl.user, bindings)},
    )
