"""CLI layer - command-line interface using Typer.

Thin layer over the pipeline stages, wiring context and handling I/O.
"""

from advartifact.cli.main import app

__all__ = ["app"]
