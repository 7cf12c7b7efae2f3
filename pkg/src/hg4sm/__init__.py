"""First- and second-order query-item relevance over a refined behavior graph."""

__version__ = "0.1.0"
