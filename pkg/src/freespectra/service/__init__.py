"""HTTP service wrapping the run engine."""

from .app import create_app

__all__ = ["create_app"]
