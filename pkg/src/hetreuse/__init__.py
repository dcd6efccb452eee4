"""Joint user association and reuse-pattern allocation for HetNets."""

__version__ = "0.1.0"
