"""Compositional generalization and forgetting in small attention networks."""

__version__ = "0.1.0"
