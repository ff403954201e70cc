"""Numerical laboratory for haptotaxis with bistable growth and its
sharp-interface limit."""

__version__ = "0.1.0"
