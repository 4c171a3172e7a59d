"""Christofides' algorithm and Best-of-Many Christofides variants for the TSP."""

__version__ = "0.1.0"
