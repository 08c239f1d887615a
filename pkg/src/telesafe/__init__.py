"""Deterministic telesurgical-robot simulator with an STPA-driven fault-injection harness."""

__version__ = "0.1.0"
