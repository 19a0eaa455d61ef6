"""Decoupling partitions and numerical experiments for ruled hypersurfaces."""

__version__ = "0.1.0"
