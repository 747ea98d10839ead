"""Chern classes of Laughlin-state bundles over quasihole moduli, with numerical cross-checks."""

__version__ = "0.1.0"
