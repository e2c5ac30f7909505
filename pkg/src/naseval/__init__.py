"""Desk-scale harness for benchmarking the architecture-proposal step of NAS algorithms."""

__version__ = "0.1.0"
