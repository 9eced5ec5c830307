"""Semantics-preserving WebAssembly diversification and oracle-guided evasion search."""

__version__ = "0.1.0"
