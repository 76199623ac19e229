"""HTTP service wrapping the trained novelty-detection artifacts."""

from .app import create_app

__all__ = ["create_app"]
