"""Deterministic simulator for asynchronous distributed gradient descent and
arbiter consensus over lossy, delayed, switching networks."""

__version__ = "0.1.0"
