"""Deterministic, file-in/file-out figure rendering for the routing lab's
CSV and JSON outputs.  Never mutates inputs; identical inputs produce
byte-identical images."""

from .figures import FigureSpec, render, FIGURE_KINDS

__all__ = ["FigureSpec", "render", "FIGURE_KINDS"]
