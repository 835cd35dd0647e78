"""Renders the search pipeline's CSV/JSONL exports as figures.

Strictly display-only: every number on a plot comes verbatim from the
input file. Four kinds: surface, tradeoff, losscurve, rankscatter.
"""

from .render import PlotJob, SchemaError, render

__all__ = ["PlotJob", "SchemaError", "render"]
__version__ = "0.1.0"
