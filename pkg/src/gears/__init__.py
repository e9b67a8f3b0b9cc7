"""Joint-local geometry sensing and hand-object interaction synthesis."""

__version__ = "0.1.0"
