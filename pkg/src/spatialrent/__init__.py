"""Spatial rent prediction: NNGP kriging, tree ensembles, neural nets and a benchmark harness."""

__version__ = "0.1.0"
