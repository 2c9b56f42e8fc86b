"""RICH probabilistic prefetching for in-order chunk streaming through roadside edge caches."""

__version__ = "0.1.0"
