"""Desk-scale step reward model: a tiny causal transformer with a scalar
head, trained on soft-labeled reasoning records and scored at step
boundaries."""

__version__ = "0.1.0"
