"""HTTP service wrapping the core simulation and localization package."""

from .app import app, create_app

__all__ = ["app", "create_app"]
