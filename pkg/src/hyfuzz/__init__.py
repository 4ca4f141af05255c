"""Hybrid hardware fuzzing framework: coverage-guided fuzzing combined
with bounded reachability analysis under a rate-based scheduler."""

__version__ = "0.1.0"
