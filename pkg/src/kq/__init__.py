"""Envelopes of invariant metric potentials and their quantization maps."""

__version__ = "0.1.0"
