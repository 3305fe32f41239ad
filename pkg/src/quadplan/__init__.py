"""Query-based sample motion planning with implicit occupancy."""

__version__ = "0.1.0"
