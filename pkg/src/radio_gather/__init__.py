"""Simulator for information gathering on tree-shaped radio networks."""

__version__ = "0.1.0"
