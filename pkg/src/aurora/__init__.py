"""Batch pipeline: generate diverse reasoning samples, segment them into
semantic steps, label steps with a judge-prompt ensemble, emit
reference-masked training records, and evaluate step-scoring models."""

__version__ = "0.1.0"
