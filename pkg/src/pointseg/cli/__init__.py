"""Command-line surface and on-disk formats."""

from .commands import build_parser, run, COMMANDS

__all__ = ["build_parser", "run", "COMMANDS"]
