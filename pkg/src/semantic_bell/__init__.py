"""Semantic CHSH Bell tests for interpretive agents."""

__version__ = "0.1.0"
