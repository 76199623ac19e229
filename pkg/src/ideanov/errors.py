"""Exception hierarchy shared across the package.

Two families matter to callers: validation-type errors (bad inputs,
broken invariants, missing artifacts) and gateway-type errors (anything
that went wrong at an external boundary, including unusable LLM output).
The CLI maps them to exit codes 2 and 3 respectively.
"""

from __future__ import annotations


class IdeanovError(Exception):
    """Base class for all package errors."""


class ValidationError(IdeanovError):
    """Input data or artifact violates a contract."""


class ConfigError(ValidationError):
    """Run configuration is inconsistent or out of range."""


class NotFoundError(ValidationError):
    """A referenced id does not exist in the given collection."""


class DomainError(ValidationError):
    """Mathematically undefined request (zero vector, empty pool, ...)."""


class TemplateError(ValidationError):
    """Prompt template and bindings do not line up."""


class StageInputError(ValidationError):
    """A pipeline stage's input artifact is missing or invalid."""

    def __init__(self, message: str, producer_stage: str | None = None):
        super().__init__(message)
        self.producer_stage = producer_stage


class GatewayError(IdeanovError):
    """External service failure (transport, exhausted retries, 4xx)."""


class FetchError(GatewayError):
    """Metadata fetch failed after retries."""

    def __init__(self, message: str, paper_id: str | None = None):
        super().__init__(message)
        self.paper_id = paper_id


class ParseError(GatewayError):
    """An LLM response could not be parsed into the expected shape."""

    def __init__(self, message: str, raw: str | None = None):
        super().__init__(message)
        self.raw = raw


class GenerationError(ParseError):
    """Generation produced no usable items."""


class ScoringError(ParseError):
    """Novelty scoring produced no usable score vector."""
