"""Deterministic figures from coalmix sweep/scan CSV files."""

from .render import KINDS, PlotError, PlotSpec, read_table, render

__version__ = "0.1.0"
