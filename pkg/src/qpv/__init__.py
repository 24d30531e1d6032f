"""Symbolic-execution verifier for a permission-based language with quantified permissions."""

__version__ = "0.1.0"
