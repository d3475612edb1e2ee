"""Constraint synthesis, test-set construction, evaluation and constrained decoding
for lexically constrained machine translation into inflected languages."""

__version__ = "0.1.0"
